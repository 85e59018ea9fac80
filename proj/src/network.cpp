#include "hwctl/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hwctl {

using nlohmann::json;

std::vector<int> Network::physical_links() const {
  std::vector<int> out;
  for (const Link& link : links)
    if (!link.is_connector) out.push_back(link.id);
  return out;
}

std::vector<int> Network::out_links(int node) const {
  std::vector<int> out;
  for (const Link& link : links)
    if (link.tail == node) out.push_back(link.id);
  return out;
}

std::vector<int> Network::in_links(int node) const {
  std::vector<int> out;
  for (const Link& link : links)
    if (link.head == node) out.push_back(link.id);
  return out;
}

int Network::origin_connector_of(int dummy_origin) const {
  for (int id : origin_connectors)
    if (links[id].tail == dummy_origin) return id;
  throw std::invalid_argument("no connector for origin " + std::to_string(dummy_origin));
}

int Network::destination_connector_of(int dummy_destination) const {
  for (int id : destination_connectors)
    if (links[id].head == dummy_destination) return id;
  throw std::invalid_argument("no connector for destination " +
                              std::to_string(dummy_destination));
}

bool Network::is_dummy(int node) const {
  return std::find(dummy_origins.begin(), dummy_origins.end(), node) != dummy_origins.end() ||
         std::find(dummy_destinations.begin(), dummy_destinations.end(), node) !=
             dummy_destinations.end();
}

int Network::add_link(int tail, int head, const LinkParams& params) {
  for (int node : {tail, head})
    if (std::find(nodes.begin(), nodes.end(), node) == nodes.end()) nodes.push_back(node);
  std::sort(nodes.begin(), nodes.end());
  Link link;
  link.id = static_cast<int>(links.size());
  link.tail = tail;
  link.head = head;
  link.params = params;
  links.push_back(link);
  return link.id;
}

namespace {

LinkParams connector_params() {
  LinkParams p;
  p.free_flow_speed = 1.0;
  p.length = 1.0;
  p.h_min = 0.0;
  p.h_max = 0.0;
  return p;
}

int next_node_id(const Network& net) {
  return net.nodes.empty() ? 1 : net.nodes.back() + 1;
}

}  // namespace

int Network::add_origin(int node) {
  int dummy = next_node_id(*this);
  int id = add_link(dummy, node, connector_params());
  links[id].is_connector = true;
  dummy_origins.push_back(dummy);
  origin_connectors.push_back(id);
  return dummy;
}

int Network::add_destination(int node) {
  int dummy = next_node_id(*this);
  int id = add_link(node, dummy, connector_params());
  links[id].is_connector = true;
  dummy_destinations.push_back(dummy);
  destination_connectors.push_back(id);
  return dummy;
}

int GlobalParams::n_demand_intervals() const {
  return static_cast<int>(std::floor(demand_horizon / dt + 1e-9));
}

double DemandProfile::rate(int pair, int k) const {
  const auto& r = pairs.at(pair).rate;
  return (k >= 1 && k <= static_cast<int>(r.size())) ? r[k - 1] : 0.0;
}

double DemandProfile::total_vehicles(double dt) const {
  double total = 0.0;
  for (const OdDemand& od : pairs)
    for (double r : od.rate) total += r * dt;
  return total;
}

std::vector<int> DemandProfile::destinations() const {
  std::set<int> out;
  for (const OdDemand& od : pairs) out.insert(od.destination);
  return {out.begin(), out.end()};
}

Scenario build_small_network(double demand_per_od) {
  Scenario sc;
  Network& net = sc.network;
  auto add = [&](int tail, int head, double cap, double vf, double len) {
    LinkParams p;
    p.inflow_cap = p.outflow_cap = cap;
    p.q_up_cap = p.q_down_cap = 600.0;
    p.free_flow_speed = vf;
    p.length = len;
    p.h_min = 0.5;
    p.h_max = 2.5;
    net.add_link(tail, head, p);
  };
  add(1, 3, 50, 1.2, 3.6);
  add(1, 4, 45, 1.1, 3.3);
  add(2, 3, 45, 1.2, 3.6);
  add(2, 4, 50, 1.1, 3.3);
  add(3, 5, 60, 1.0, 4.0);
  add(4, 5, 60, 1.0, 3.0);
  int o1 = net.add_origin(1);
  int o2 = net.add_origin(2);
  int d5 = net.add_destination(5);

  sc.params.dt = 5.0;
  sc.params.n_intervals = 18;
  sc.params.demand_horizon = 40.0;
  sc.params.vehicle_length = 0.005;
  settle_vehicle_length(net, sc.params);

  int n1 = sc.params.n_demand_intervals();
  sc.demand.pairs.push_back({o1, d5, std::vector<double>(n1, demand_per_od)});
  sc.demand.pairs.push_back({o2, d5, std::vector<double>(n1, demand_per_od)});
  return sc;
}

double settle_vehicle_length(const Network& net, GlobalParams& params, double fallback) {
  double tightest = kUnbounded;
  for (int id : net.physical_links()) {
    const LinkParams& p = net.links[id].params;
    tightest = std::min(tightest, p.length * seconds_to_minutes(p.h_min));
  }
  double lhs = params.dt * params.vehicle_length;
  if (std::isfinite(tightest) && std::abs(lhs - tightest) <= 1e-12 * tightest)
    params.vehicle_length = fallback;
  return params.vehicle_length;
}

DemandProfile uniform_demand(const Network& net, const GlobalParams& params, double rate) {
  DemandProfile d;
  int n1 = params.n_demand_intervals();
  for (int o : net.dummy_origins)
    for (int s : net.dummy_destinations) d.pairs.push_back({o, s, std::vector<double>(n1, rate)});
  return d;
}

std::vector<std::string> validate(const Network& net, const GlobalParams& params) {
  std::vector<std::string> out;
  auto name = [&](const Link& l) {
    return "link " + std::to_string(l.tail) + "->" + std::to_string(l.head);
  };
  if (!(params.vehicle_length > 0)) out.push_back("vehicle length must be positive");
  if (!(params.dt > 0)) out.push_back("interval length must be positive");
  if (params.n_intervals < 1) out.push_back("need at least one interval");
  if (params.n_demand_intervals() > params.n_intervals)
    out.push_back("demand horizon exceeds the planning horizon");

  for (std::size_t i = 0; i < net.links.size(); ++i) {
    const Link& l = net.links[i];
    if (l.id != static_cast<int>(i)) out.push_back(name(l) + ": id does not match position");
    if (l.tail == l.head) out.push_back(name(l) + ": self loop");
    if (l.is_connector) continue;
    const LinkParams& p = l.params;
    for (double v : {p.free_flow_speed, p.length, p.q_up_cap, p.q_down_cap, p.inflow_cap,
                     p.outflow_cap, p.h_min, p.h_max})
      if (!(v > 0)) {
        out.push_back(name(l) + ": parameters must be positive");
        break;
      }
    if (p.h_min > p.h_max) out.push_back(name(l) + ": h_min exceeds h_max");
    if (!(params.dt * params.vehicle_length < p.length * seconds_to_minutes(p.h_min)))
      out.push_back(name(l) + ": dt*L >= L_ij*h_min, shockwave resolves within one interval");
    if (std::min(p.inflow_cap, p.outflow_cap) < p.free_flow_speed / p.length)
      out.push_back(name(l) + ": flow capacity below v_f/L_ij");
  }

  for (int o : net.dummy_origins) {
    auto outs = net.out_links(o);
    if (outs.size() != 1 || !net.links[outs[0]].is_connector || !net.in_links(o).empty())
      out.push_back("origin " + std::to_string(o) + " needs exactly one outgoing connector");
    else if (net.is_dummy(net.links[outs[0]].head))
      out.push_back("origin connector " + std::to_string(o) + " must end at a physical node");
  }
  for (int s : net.dummy_destinations) {
    auto ins = net.in_links(s);
    if (ins.size() != 1 || !net.links[ins[0]].is_connector || !net.out_links(s).empty())
      out.push_back("destination " + std::to_string(s) + " needs exactly one incoming connector");
  }
  std::vector<int> connectors = net.origin_connectors;
  connectors.insert(connectors.end(), net.destination_connectors.begin(),
                    net.destination_connectors.end());
  for (int id : connectors)
    if (id < 0 || id >= static_cast<int>(net.links.size()) || !net.links[id].is_connector)
      out.push_back("connector list names a non-connector link " + std::to_string(id));
  for (const Link& l : net.links)
    if (l.is_connector &&
        std::find(connectors.begin(), connectors.end(), l.id) == connectors.end())
      out.push_back(name(l) + ": connector not registered");

  // Reachability from each origin to each destination.
  for (int o : net.dummy_origins) {
    std::set<int> seen{o};
    std::vector<int> stack{o};
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      for (int id : net.out_links(n))
        if (seen.insert(net.links[id].head).second) stack.push_back(net.links[id].head);
    }
    for (int s : net.dummy_destinations)
      if (!seen.count(s))
        out.push_back("destination " + std::to_string(s) + " unreachable from origin " +
                      std::to_string(o));
  }
  return out;
}

namespace {

json cap_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double cap_from_json(const json& j) { return j.is_null() ? kUnbounded : j.get<double>(); }

}  // namespace

std::string to_json(const Scenario& sc) {
  json doc;
  doc["units"] = {{"length", "km"}, {"time", "min"}, {"flow", "veh/min"},
                  {"queue", "veh"}, {"headway", "s"}};
  doc["params"] = {{"vehicle_length", sc.params.vehicle_length},
                   {"dt", sc.params.dt},
                   {"n_intervals", sc.params.n_intervals},
                   {"demand_horizon", sc.params.demand_horizon},
                   {"end_slack", sc.params.end_slack}};
  doc["nodes"] = sc.network.nodes;
  json links = json::array();
  for (const Link& l : sc.network.links) {
    const LinkParams& p = l.params;
    links.push_back({{"id", l.id},
                     {"tail", l.tail},
                     {"head", l.head},
                     {"is_connector", l.is_connector},
                     {"free_flow_speed", p.free_flow_speed},
                     {"length", p.length},
                     {"q_up_cap", cap_to_json(p.q_up_cap)},
                     {"q_down_cap", cap_to_json(p.q_down_cap)},
                     {"inflow_cap", cap_to_json(p.inflow_cap)},
                     {"outflow_cap", cap_to_json(p.outflow_cap)},
                     {"h_min", p.h_min},
                     {"h_max", p.h_max}});
  }
  doc["links"] = links;
  doc["dummy_origins"] = sc.network.dummy_origins;
  doc["dummy_destinations"] = sc.network.dummy_destinations;
  doc["origin_connectors"] = sc.network.origin_connectors;
  doc["destination_connectors"] = sc.network.destination_connectors;
  json demand = json::array();
  for (const OdDemand& od : sc.demand.pairs)
    demand.push_back({{"origin", od.origin}, {"destination", od.destination}, {"rate", od.rate}});
  doc["demand"] = demand;
  return doc.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("network document: ") + e.what());
  }
  Scenario sc;
  try {
    const json& p = doc.at("params");
    sc.params.vehicle_length = p.at("vehicle_length").get<double>();
    sc.params.dt = p.at("dt").get<double>();
    sc.params.n_intervals = p.at("n_intervals").get<int>();
    sc.params.demand_horizon = p.at("demand_horizon").get<double>();
    sc.params.end_slack = p.value("end_slack", 1e-6);
    sc.network.nodes = doc.at("nodes").get<std::vector<int>>();
    for (const json& j : doc.at("links")) {
      Link l;
      l.id = j.at("id").get<int>();
      l.tail = j.at("tail").get<int>();
      l.head = j.at("head").get<int>();
      l.is_connector = j.at("is_connector").get<bool>();
      l.params.free_flow_speed = j.at("free_flow_speed").get<double>();
      l.params.length = j.at("length").get<double>();
      l.params.q_up_cap = cap_from_json(j.at("q_up_cap"));
      l.params.q_down_cap = cap_from_json(j.at("q_down_cap"));
      l.params.inflow_cap = cap_from_json(j.at("inflow_cap"));
      l.params.outflow_cap = cap_from_json(j.at("outflow_cap"));
      l.params.h_min = j.at("h_min").get<double>();
      l.params.h_max = j.at("h_max").get<double>();
      sc.network.links.push_back(l);
    }
    sc.network.dummy_origins = doc.at("dummy_origins").get<std::vector<int>>();
    sc.network.dummy_destinations = doc.at("dummy_destinations").get<std::vector<int>>();
    sc.network.origin_connectors = doc.at("origin_connectors").get<std::vector<int>>();
    sc.network.destination_connectors = doc.at("destination_connectors").get<std::vector<int>>();
    for (const json& j : doc.at("demand"))
      sc.demand.pairs.push_back({j.at("origin").get<int>(), j.at("destination").get<int>(),
                                 j.at("rate").get<std::vector<double>>()});
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("network document: ") + e.what());
  }
  return sc;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hwctl
