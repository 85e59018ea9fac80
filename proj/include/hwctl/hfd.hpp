#pragma once

#include "hwctl/network.hpp"

// Headway-dependent fundamental diagram. Headways are passed in seconds.
namespace hwctl::hfd {

enum class Regime { kFree = 0, kCongested = 1 };

struct FdEval {
  double density = 0.0;
  double headway = 0.0;
  double flow = 0.0;
  Regime regime = Regime::kFree;
};

struct Transition {
  Regime regime = Regime::kFree;
  double flow = 0.0;
  double density = 0.0;
};

double critical_density(double h, double v_f, double L);

// Peak flow v_f / (h v_f + L).
double max_flow(double h, double v_f, double L);

// Ties at the breakpoint count as congested.
FdEval evaluate(double rho, double h, const LinkParams& link, double L);

double flow_fd(double rho, double h, const LinkParams& link, double L);

int shockwave_steps(double h, double dt, double L, double link_length);

double density_update(double rho_prev, double u, double f, double dt, double link_length,
                      double L);

// Solves the implicit step {f = f_FD(rho), rho = rho_prev + dt (u - f) / L_ij}.
Transition resolve_regime(double rho_prev, double u, double h, const LinkParams& link,
                          double dt, double L);

}  // namespace hwctl::hfd
