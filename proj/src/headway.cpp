#include "hwctl/headway.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hwctl {

namespace {

HeadwayField build(const Network& net, int n_intervals, double (*pick)(const LinkParams&),
                   double constant) {
  HeadwayField h;
  h.links = net.physical_links();
  h.n_intervals = n_intervals;
  for (int id : h.links) {
    double value = pick ? pick(net.links[id].params) : constant;
    h.values.insert(h.values.end(), n_intervals, value);
  }
  return h;
}

}  // namespace

HeadwayField HeadwayField::uniform(const Network& net, int n_intervals, double h) {
  return build(net, n_intervals, nullptr, h);
}

HeadwayField HeadwayField::minimum(const Network& net, int n_intervals) {
  return build(net, n_intervals, [](const LinkParams& p) { return p.h_min; }, 0.0);
}

HeadwayField HeadwayField::maximum(const Network& net, int n_intervals) {
  return build(net, n_intervals, [](const LinkParams& p) { return p.h_max; }, 0.0);
}

int HeadwayField::position(int link) const {
  auto it = std::lower_bound(links.begin(), links.end(), link);
  return (it != links.end() && *it == link) ? static_cast<int>(it - links.begin()) : -1;
}

double HeadwayField::at(int link, int k) const {
  int p = position(link);
  if (p < 0 || k < 1 || k > n_intervals) throw std::out_of_range("headway cell out of range");
  return values[p * n_intervals + (k - 1)];
}

double& HeadwayField::at(int link, int k) {
  int p = position(link);
  if (p < 0 || k < 1 || k > n_intervals) throw std::out_of_range("headway cell out of range");
  return values[p * n_intervals + (k - 1)];
}

void check_headway_bounds(const Network& net, const HeadwayField& h) {
  if (h.links != net.physical_links())
    throw std::invalid_argument("headway field does not cover the physical links");
  if (static_cast<int>(h.values.size()) != static_cast<int>(h.links.size()) * h.n_intervals)
    throw std::invalid_argument("headway field has the wrong number of cells");
  for (std::size_t p = 0; p < h.links.size(); ++p) {
    const LinkParams& lp = net.links[h.links[p]].params;
    for (int k = 1; k <= h.n_intervals; ++k) {
      double v = h.values[p * h.n_intervals + (k - 1)];
      if (!(v >= lp.h_min - 1e-12 && v <= lp.h_max + 1e-12))
        throw std::invalid_argument("headway " + std::to_string(v) + " s on link " +
                                    std::to_string(h.links[p]) + " interval " +
                                    std::to_string(k) + " outside [h_min, h_max]");
    }
  }
}

}  // namespace hwctl
