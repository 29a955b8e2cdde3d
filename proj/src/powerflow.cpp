#include "dcopf/powerflow.hpp"

#include "dcopf/error.hpp"

#include <cmath>
#include <map>

namespace dcopf {

GridEquations grid_equations(const NetworkCase& network) {
  validate(network);
  const Eigen::Index ns = network.num_sources();
  const Eigen::Index nl = network.num_loads();

  GridEquations ge;
  std::map<std::string, std::pair<bool, Eigen::Index>> where;
  ge.source_resistance.resize(ns);
  ge.load_resistance.resize(nl);
  for (Eigen::Index k = 0; k < ns; ++k) {
    const auto& s = network.sources[static_cast<std::size_t>(k)];
    where[s.bus] = {true, k};
    ge.source_order.push_back(s.bus);
    ge.source_resistance(k) = s.series_resistance;
  }
  for (Eigen::Index j = 0; j < nl; ++j) {
    const auto& l = network.loads[static_cast<std::size_t>(j)];
    where[l.bus] = {false, j};
    ge.load_order.push_back(l.bus);
    ge.load_resistance(j) = l.shunt_resistance;
  }

  // Nodal conductance matrix partitioned into source (S) and load (L) buses,
  // including 1/R_s at source buses and 1/R_l at load buses.
  Eigen::MatrixXd g_ss = Eigen::MatrixXd::Zero(ns, ns);
  Eigen::MatrixXd g_sl = Eigen::MatrixXd::Zero(ns, nl);
  Eigen::MatrixXd g_ll = Eigen::MatrixXd::Zero(nl, nl);
  g_ss.diagonal() += ge.source_resistance.cwiseInverse();
  g_ll.diagonal() += ge.load_resistance.cwiseInverse();
  for (const auto& line : network.lines) {
    const auto [fs, fi] = where.at(line.from);
    const auto [ts, ti] = where.at(line.to);
    const double g = 1.0 / line.resistance;
    ge.lines.push_back({fs, fi, ts, ti, line.resistance});
    (fs ? g_ss(fi, fi) : g_ll(fi, fi)) += g;
    (ts ? g_ss(ti, ti) : g_ll(ti, ti)) += g;
    if (fs && ts) {
      g_ss(fi, ti) -= g;
      g_ss(ti, fi) -= g;
    } else if (!fs && !ts) {
      g_ll(fi, ti) -= g;
      g_ll(ti, fi) -= g;
    } else {
      const auto s = fs ? fi : ti;
      const auto l = fs ? ti : fi;
      g_sl(s, l) -= g;
    }
  }

  const Eigen::LLT<Eigen::MatrixXd> g_ss_llt(g_ss);
  if (g_ss_llt.info() != Eigen::Success) throw SingularMatrixError("source-bus block is singular");
  const Eigen::MatrixXd gss_inv_gsl = g_ss_llt.solve(g_sl);
  const Eigen::MatrixXd gss_inv_rs = g_ss_llt.solve(
      Eigen::MatrixXd(ge.source_resistance.cwiseInverse().asDiagonal()));

  ge.Y_ll = -(g_ll - g_sl.transpose() * gss_inv_gsl);
  ge.Y_ll = 0.5 * (ge.Y_ll + ge.Y_ll.transpose());
  ge.Y_ls = -(g_sl.transpose() * gss_inv_rs);
  ge.source_from_vref = gss_inv_rs;
  ge.source_from_load = -gss_inv_gsl;

  const Eigen::LLT<Eigen::MatrixXd> g_llt(-ge.Y_ll);
  if (g_llt.info() != Eigen::Success)
    throw SingularMatrixError("reduced load conductance matrix is not positive definite");
  ge.Y_ll_inv = -g_llt.solve(Eigen::MatrixXd::Identity(nl, nl));
  ge.Y_ll_inv = 0.5 * (ge.Y_ll_inv + ge.Y_ll_inv.transpose());
  return ge;
}

Eigen::VectorXd open_circuit(const GridEquations& ge, const Eigen::VectorXd& vref) {
  return -ge.Y_ll_inv * (ge.Y_ls * vref);
}

Eigen::MatrixXd normalized_impedance(const GridEquations& ge, const Eigen::VectorXd& w) {
  if ((w.array() == 0.0).any()) throw Error("normalized_impedance: zero open-circuit voltage");
  const Eigen::VectorXd inv = w.cwiseInverse();
  return inv.asDiagonal() * ge.Y_ll_inv * inv.asDiagonal();
}

Eigen::VectorXd pf_mismatch(const GridEquations& ge, const Eigen::VectorXd& vref,
                            const Eigen::VectorXd& p, const Eigen::VectorXd& v_load) {
  return v_load.cwiseProduct(ge.Y_ll * v_load + ge.Y_ls * vref) - p;
}

Eigen::VectorXd source_voltages(const GridEquations& ge, const Eigen::VectorXd& vref,
                                const Eigen::VectorXd& v_load) {
  return ge.source_from_vref * vref + ge.source_from_load * v_load;
}

Eigen::VectorXd line_currents(const GridEquations& ge, const Eigen::VectorXd& v_source,
                              const Eigen::VectorXd& v_load) {
  Eigen::VectorXd i(static_cast<Eigen::Index>(ge.lines.size()));
  for (std::size_t p = 0; p < ge.lines.size(); ++p) {
    const auto& e = ge.lines[p];
    const double vf = e.from_is_source ? v_source(e.from) : v_load(e.from);
    const double vt = e.to_is_source ? v_source(e.to) : v_load(e.to);
    i(static_cast<Eigen::Index>(p)) = (vf - vt) / e.resistance;
  }
  return i;
}

PfSolution solve_pf(const GridEquations& ge, const Eigen::VectorXd& vref,
                    const Eigen::VectorXd& p, const std::optional<Eigen::VectorXd>& v0,
                    const PfOptions& options) {
  if (vref.size() != ge.num_sources() || p.size() != ge.num_loads())
    throw Error("solve_pf: dimension mismatch");
  if (!p.allFinite() || !vref.allFinite()) throw Error("solve_pf: non-finite input");

  const Eigen::VectorXd injection = ge.Y_ls * vref;
  Eigen::VectorXd v = v0 ? *v0 : open_circuit(ge, vref);
  const double tol = options.tolerance * std::max(1.0, p.lpNorm<Eigen::Infinity>());

  auto mismatch = [&](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.cwiseProduct(ge.Y_ll * x + injection) - p);
  };

  PfSolution sol;
  Eigen::VectorXd f = mismatch(v);
  double res = f.lpNorm<Eigen::Infinity>();
  int it = 0;
  while (res > tol) {
    if (it == options.max_iterations)
      throw ConvergenceError("power flow did not converge in " +
                                 std::to_string(options.max_iterations) + " iterations",
                             res);
    ++it;
    Eigen::MatrixXd jac = v.asDiagonal() * ge.Y_ll;
    jac.diagonal() += ge.Y_ll * v + injection;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(std::abs(lu.determinant()) > 0.0) || lu.rcond() < 1e-14)
      throw SingularMatrixError("power-flow Jacobian is singular at the current iterate");
    const Eigen::VectorXd step = lu.solve(-f);

    double alpha = 1.0;
    Eigen::VectorXd trial = v + step;
    Eigen::VectorXd f_trial = mismatch(trial);
    for (int h = 0; h < options.max_halvings; ++h) {
      if ((trial.array() > 0.0).all() && f_trial.lpNorm<Eigen::Infinity>() < res) break;
      alpha *= 0.5;
      trial = v + alpha * step;
      f_trial = mismatch(trial);
    }
    v = trial;
    f = f_trial;
    res = f.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(res))
      throw ConvergenceError("power flow diverged", res);
  }
  if ((v.array() <= 0.0).any())
    throw ConvergenceError("power flow converged to a nonpositive load voltage", res);

  sol.v_load = v;
  sol.v_source = source_voltages(ge, vref, v);
  sol.i_line = line_currents(ge, sol.v_source, v);
  sol.p_load = p;
  sol.iterations = it;
  sol.residual = res;
  return sol;
}

double losses(const GridEquations& ge, const PfSolution& pf, const Eigen::VectorXd& vref) {
  const Eigen::VectorXd i_src = (vref - pf.v_source).cwiseQuotient(ge.source_resistance);
  return vref.dot(i_src) - pf.p_load.sum();
}

double series_losses(const GridEquations& ge, const PfSolution& pf, const Eigen::VectorXd& vref) {
  const double shunt = pf.v_load.cwiseAbs2().cwiseQuotient(ge.load_resistance).sum();
  return losses(ge, pf, vref) - shunt;
}

double resistive_dissipation(const GridEquations& ge, const PfSolution& pf,
                             const Eigen::VectorXd& vref) {
  const Eigen::VectorXd i_src = (vref - pf.v_source).cwiseQuotient(ge.source_resistance);
  double total = i_src.cwiseAbs2().cwiseProduct(ge.source_resistance).sum();
  for (std::size_t p = 0; p < ge.lines.size(); ++p)
    total += pf.i_line(static_cast<Eigen::Index>(p)) * pf.i_line(static_cast<Eigen::Index>(p)) *
             ge.lines[p].resistance;
  total += pf.v_load.cwiseAbs2().cwiseQuotient(ge.load_resistance).sum();
  return total;
}

}  // namespace dcopf
