#pragma once

#include <vector>

#include "hwctl/network.hpp"

namespace hwctl {

// h_ij(k) in seconds for every physical link and k = 1..N, link-major.
struct HeadwayField {
  std::vector<int> links;  // physical link ids
  int n_intervals = 0;
  std::vector<double> values;

  static HeadwayField uniform(const Network& net, int n_intervals, double h);
  static HeadwayField minimum(const Network& net, int n_intervals);
  static HeadwayField maximum(const Network& net, int n_intervals);

  int position(int link) const;  // -1 if the link is not controlled
  double at(int link, int k) const;
  double& at(int link, int k);
  int cell(int link, int k) const { return position(link) * n_intervals + (k - 1); }
  int size() const { return static_cast<int>(values.size()); }
  bool operator==(const HeadwayField&) const = default;
};

// Throws std::invalid_argument naming the first cell outside [h_min, h_max].
void check_headway_bounds(const Network& net, const HeadwayField& h);

}  // namespace hwctl
