#pragma once

// Text formats: FieldGrid / residual / I-term CSV, BlowupReport JSON and
// particle dumps. Numbers are written in "%.12e" form by std::to_chars,
// which ignores the global locale.

#include <charstoch/balance.hpp>
#include <charstoch/characteristics.hpp>
#include <charstoch/montecarlo.hpp>
#include <charstoch/representation.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

namespace charstoch {

inline std::string fmt_num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 12);
  return std::string(buf, res.ptr);
}

inline std::string field_grid_csv(const FieldGrid& g) {
  std::string out = "t";
  for (std::size_t d = 0; d < g.axes.size(); ++d) out += ",x" + std::to_string(d + 1);
  if (g.components == 1)
    out += ",value";
  else
    for (std::size_t c = 0; c < g.components; ++c) out += ",value" + std::to_string(c + 1);
  out += ",valid\n";
  for (std::size_t p = 0; p < g.point_count(); ++p) {
    out += fmt_num(g.t);
    for (double c : g.coords(p)) out += "," + fmt_num(c);
    for (std::size_t c = 0; c < g.components; ++c) out += "," + fmt_num(g.value(p, c));
    out += g.valid[p] ? ",1\n" : ",0\n";
  }
  return out;
}

inline std::string residual_csv(const std::vector<ResidualReport>& reps) {
  std::string out = "equation,h,dt,max_residual,l1_residual,ratio\n";
  for (const auto& r : reps) {
    out += r.equation + "," + fmt_num(r.h) + "," + fmt_num(r.dt) + "," + fmt_num(r.max_residual) + "," +
           fmt_num(r.l1_residual) + "," + (r.ratio ? fmt_num(*r.ratio) : std::string()) + "\n";
  }
  return out;
}

inline std::string iterm_csv(const std::vector<ITermRow>& rows) {
  std::string out = "sigma,I_u_sup";
  const std::size_t n = rows.empty() ? 0 : rows.front().I_a_sup.size();
  for (std::size_t i = 0; i < n; ++i) out += ",I_a_sup_" + std::to_string(i + 1);
  out += "\n";
  for (const auto& r : rows) {
    out += fmt_num(r.sigma) + "," + fmt_num(r.I_u_sup);
    for (double v : r.I_a_sup) out += "," + fmt_num(v);
    out += "\n";
  }
  return out;
}

inline nlohmann::json blowup_json(const BlowupReport& r) {
  nlohmann::json j;
  if (r.finite)
    j["t_star"] = r.t_star;
  else
    j["t_star"] = "inf";
  j["y_star"] = r.y_star;
  j["min_functional"] = r.min_functional;
  j["method"] = r.method;
  return j;
}

inline BlowupReport blowup_from_json(const nlohmann::json& j) {
  BlowupReport r;
  if (j.at("t_star").is_string()) {
    if (j.at("t_star").get<std::string>() != "inf") throw SchemaError("t_star must be a number or \"inf\"");
    r.finite = false;
    r.t_star = std::numeric_limits<double>::infinity();
  } else {
    r.finite = true;
    r.t_star = j.at("t_star").get<double>();
  }
  r.y_star = j.at("y_star").get<std::vector<double>>();
  r.min_functional = j.at("min_functional").get<double>();
  r.method = j.at("method").get<std::string>();
  return r;
}

/// Columns y1..yn, U, X1..Xn, w.
inline std::string ensemble_csv(const ParticleEnsemble& e) {
  std::string out;
  for (std::size_t i = 0; i < e.dim; ++i) out += "y" + std::to_string(i + 1) + ",";
  out += "U";
  for (std::size_t i = 0; i < e.dim; ++i) out += ",X" + std::to_string(i + 1);
  out += ",w\n";
  for (std::size_t j = 0; j < e.size(); ++j) {
    for (double v : e.initial(j)) out += fmt_num(v) + ",";
    out += fmt_num(e.U[j]);
    for (double v : e.position(j)) out += "," + fmt_num(v);
    out += "," + fmt_num(e.w[j]) + "\n";
  }
  return out;
}

struct ConvergenceRow {
  double sigma = 0.0;
  double max_err_u = 0.0;
  double max_err_a = 0.0;
  double max_err_rho = 0.0;
};

inline std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::string out = "sigma,max_err_u,max_err_a,max_err_rho\n";
  for (const auto& r : rows)
    out += fmt_num(r.sigma) + "," + fmt_num(r.max_err_u) + "," + fmt_num(r.max_err_a) + "," +
           fmt_num(r.max_err_rho) + "\n";
  return out;
}

/// Max errors of the sigma-fields against the classical solution on the
/// space grid, one row per sigma. Requires t < t*.
inline std::vector<ConvergenceRow> convergence_table(const ProblemSpec& spec, const std::vector<double>& sigmas,
                                                     double t) {
  if (!(t > 0.0)) throw ValidationError("convergence study needs t > 0");
  const BlowupReport b = blow_up_time(spec);
  if (b.finite && t >= b.t_star)
    throw NearBlowup("t = " + std::to_string(t) + " is not before t* = " + std::to_string(b.t_star));
  const std::vector<Point> pts = spec.grid_points();
  const std::size_t n = static_cast<std::size_t>(spec.n());
  std::vector<double> ub(pts.size()), rb(pts.size());
  std::vector<Point> ab(pts.size());
  parallel_for(pts.size(), [&](std::size_t p) {
    ub[p] = solve_implicit(spec, t, pts[p]);
    rb[p] = eval_rho_bar(spec, t, pts[p]);
    ab[p] = eval_a_bar(spec, t, pts[p]);
  });
  std::vector<ConvergenceRow> rows;
  for (double s : sigmas) {
    const ProblemSpec ps = spec.with_sigma(s);
    const KernelQuadrature kq(ps, t);
    std::vector<double> eu(pts.size()), ea(pts.size()), er(pts.size());
    parallel_for(pts.size(), [&](std::size_t p) {
      const SigmaFields f = kq.fields(pts[p]);
      eu[p] = std::fabs(f.u - ub[p]);
      er[p] = std::fabs(f.rho - rb[p]);
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(f.a[i] - ab[p][i]));
      ea[p] = m;
    });
    ConvergenceRow r;
    r.sigma = s;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      r.max_err_u = std::max(r.max_err_u, eu[p]);
      r.max_err_a = std::max(r.max_err_a, ea[p]);
      r.max_err_rho = std::max(r.max_err_rho, er[p]);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace charstoch
