#include "hwctl/hfd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hwctl::hfd {

namespace {
constexpr double kRel = 1e-9;
}

double critical_density(double h, double v_f, double L) {
  return 1.0 / (seconds_to_minutes(h) * v_f + L);
}

double max_flow(double h, double v_f, double L) {
  return v_f * critical_density(h, v_f, L);
}

FdEval evaluate(double rho, double h, const LinkParams& link, double L) {
  double jam = 1.0 / L;
  if (rho < 0.0 || rho > jam * (1.0 + kRel))
    throw std::domain_error("density " + std::to_string(rho) + " outside [0, 1/L]");
  FdEval e;
  e.density = rho;
  e.headway = h;
  if (rho < critical_density(h, link.free_flow_speed, L)) {
    e.regime = Regime::kFree;
    e.flow = link.free_flow_speed * rho;
  } else {
    e.regime = Regime::kCongested;
    e.flow = std::max(0.0, (1.0 - rho * L) / seconds_to_minutes(h));
  }
  return e;
}

double flow_fd(double rho, double h, const LinkParams& link, double L) {
  return evaluate(rho, h, link, L).flow;
}

int shockwave_steps(double h, double dt, double L, double link_length) {
  double step = dt * L;
  double reach = link_length * seconds_to_minutes(h);
  if (!(step < reach)) throw std::domain_error("shockwave resolves within one interval");
  double ratio = reach / step;
  auto n = static_cast<int>(std::floor(ratio));
  if (ratio - n > 1.0 - kRel) ++n;  // exact multiple
  return n;
}

double density_update(double rho_prev, double u, double f, double dt, double link_length,
                      double L) {
  double rho = rho_prev + dt * (u - f) / link_length;
  double jam = 1.0 / L;
  if (rho < -kRel * jam || rho > jam * (1.0 + kRel))
    throw std::domain_error("density update leaves [0, 1/L]: " + std::to_string(rho));
  return rho;
}

Transition resolve_regime(double rho_prev, double u, double h, const LinkParams& link,
                          double dt, double L) {
  const double vf = link.free_flow_speed;
  const double lij = link.length;
  const double hm = seconds_to_minutes(h);
  const double rc = critical_density(h, vf, L);

  double rho_free = (lij * rho_prev + dt * u) / (lij + dt * vf);
  if (rho_free < rc) return {Regime::kFree, vf * rho_free, rho_free};

  double denom = lij * hm - L * dt;
  if (!(denom > 0)) throw std::domain_error("shockwave resolves within one interval");
  double rho_cong = (hm * lij * rho_prev + hm * dt * u - dt) / denom;
  double f_cong = (lij - L * lij * rho_prev - L * dt * u) / denom;
  if (rho_cong >= rc * (1.0 - kRel) && rho_cong <= (1.0 + kRel) / L && f_cong >= -kRel)
    return {Regime::kCongested, std::max(0.0, f_cong), std::max(rho_cong, rc)};
  throw std::domain_error("no regime admits the inflow; inflow exceeds link storage");
}

}  // namespace hwctl::hfd
