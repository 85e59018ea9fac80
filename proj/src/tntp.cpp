#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hwctl/network.hpp"

namespace hwctl {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::runtime_error("tntp line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Reads "<KEY> value" lines up to <END OF METADATA>; returns the next line number.
std::size_t read_metadata(const std::vector<std::string>& lines,
                          std::map<std::string, std::string>& meta) {
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string t = trim(lines[i]);
    if (t.empty() || t[0] == '~') continue;
    if (t[0] != '<') fail(static_cast<int>(i + 1), "expected metadata tag");
    auto close = t.find('>');
    if (close == std::string::npos) fail(static_cast<int>(i + 1), "unterminated metadata tag");
    std::string key = t.substr(1, close - 1);
    if (key == "END OF METADATA") return i + 1;
    meta[key] = trim(t.substr(close + 1));
  }
  if (!lines.empty()) fail(static_cast<int>(lines.size()), "missing <END OF METADATA>");
  return 0;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key, int line) {
  auto it = meta.find(key);
  if (it == meta.end()) fail(line, "missing <" + key + ">");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    fail(line, "bad value for <" + key + ">");
  }
}

}  // namespace

Scenario load_tntp(const std::string& net_text, const std::string& trips_text,
                   const GlobalParams& params, const TntpOptions& options) {
  Scenario sc;
  sc.params = params;

  auto lines = split_lines(net_text);
  std::map<std::string, std::string> meta;
  std::size_t first = read_metadata(lines, meta);
  if (lines.empty()) fail(1, "empty network file");
  int n_links = meta_int(meta, "NUMBER OF LINKS", static_cast<int>(first));
  int n_zones = meta_int(meta, "NUMBER OF ZONES", static_cast<int>(first));
  int n_nodes = meta_int(meta, "NUMBER OF NODES", static_cast<int>(first));

  Network& net = sc.network;
  for (std::size_t i = first; i < lines.size(); ++i) {
    std::string t = trim(lines[i]);
    if (t.empty() || t[0] == '~') continue;
    int line = static_cast<int>(i + 1);
    if (auto semi = t.find(';'); semi != std::string::npos) t = t.substr(0, semi);
    std::istringstream row(t);
    int tail = 0, head = 0;
    double capacity = 0, length = 0, fft = 0;
    if (!(row >> tail >> head >> capacity >> length >> fft)) fail(line, "malformed link row");
    if (tail == head) fail(line, "self loop");
    if (!(capacity > 0 && length > 0 && fft > 0)) fail(line, "non-positive link attribute");
    LinkParams p;
    p.length = length * options.length_to_km;
    p.free_flow_speed = p.length / fft;
    p.inflow_cap = p.outflow_cap = capacity * options.capacity_to_veh_per_min;
    p.q_up_cap = p.q_down_cap = options.queue_cap_per_km * p.length;
    p.h_min = options.h_min;
    p.h_max = options.h_max;
    net.add_link(tail, head, p);
  }
  if (static_cast<int>(net.links.size()) != n_links)
    fail(static_cast<int>(lines.size()),
         "expected " + std::to_string(n_links) + " links, read " +
             std::to_string(net.links.size()));
  if (static_cast<int>(net.nodes.size()) != n_nodes)
    fail(static_cast<int>(lines.size()), "node count does not match <NUMBER OF NODES>");

  // trips[origin][destination] = vehicles
  std::map<int, std::map<int, double>> trips;
  auto tlines = split_lines(trips_text);
  bool any_content = std::any_of(tlines.begin(), tlines.end(),
                                 [](const std::string& s) { return !trim(s).empty(); });
  if (any_content) {
    std::map<std::string, std::string> tmeta;
    std::size_t tfirst = read_metadata(tlines, tmeta);
    int origin = -1;
    for (std::size_t i = tfirst; i < tlines.size(); ++i) {
      std::string t = trim(tlines[i]);
      int line = static_cast<int>(i + 1);
      if (t.empty() || t[0] == '~') continue;
      if (t.rfind("Origin", 0) == 0) {
        std::istringstream row(t.substr(6));
        if (!(row >> origin) || origin < 1 || origin > n_zones) fail(line, "bad origin header");
        trips[origin];
        continue;
      }
      if (origin < 0) fail(line, "O-D entries before any Origin block");
      std::istringstream row(t);
      std::string entry;
      while (std::getline(row, entry, ';')) {
        entry = trim(entry);
        if (entry.empty()) continue;
        auto colon = entry.find(':');
        if (colon == std::string::npos) fail(line, "malformed O-D entry '" + entry + "'");
        try {
          int dest = std::stoi(entry.substr(0, colon));
          double value = std::stod(entry.substr(colon + 1));
          if (dest < 1 || dest > n_zones || value < 0) fail(line, "bad O-D entry");
          if (dest != origin && value > 0) trips[origin][dest] += value * options.trips_to_veh;
        } catch (const std::invalid_argument&) {
          fail(line, "malformed O-D entry '" + entry + "'");
        }
      }
    }
    auto total = tmeta.find("TOTAL OD FLOW");
    if (total != tmeta.end() && std::stod(total->second) > 0 && trips.empty())
      fail(static_cast<int>(tlines.size()), "missing O-D blocks");
  }

  std::set<int> dests;
  for (auto& [o, row] : trips)
    for (auto& [d, v] : row) dests.insert(d);
  std::map<int, int> dummy_origin, dummy_dest;
  for (auto& [o, row] : trips)
    if (!row.empty()) dummy_origin[o] = net.add_origin(o);
  for (int d : dests) dummy_dest[d] = net.add_destination(d);

  int n1 = params.n_demand_intervals();
  for (auto& [o, row] : trips)
    for (auto& [d, v] : row) {
      double rate = v / (n1 * params.dt);
      sc.demand.pairs.push_back({dummy_origin[o], dummy_dest[d], std::vector<double>(n1, rate)});
    }
  return sc;
}

}  // namespace hwctl
