#include "dcopf/lmi.hpp"

#include "dcopf/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace dcopf {

Eigen::MatrixXd lmi_block_value(const LmiBlock& block, const Eigen::MatrixXd& P,
                                const Eigen::VectorXd& lambda) {
  Eigen::MatrixXd pm = P * block.M;
  Eigen::MatrixXd value = block.E.size() == 0 ? Eigen::MatrixXd(pm)
                                              : Eigen::MatrixXd(block.E.transpose() * pm);
  value += value.transpose().eval();
  for (std::size_t v = 0; v < block.lambda_terms.size(); ++v)
    value += lambda(static_cast<Eigen::Index>(v)) * block.lambda_terms[v];
  return value;
}

namespace {

// F(z) = constant + sigma (E^T P M + M^T P E) + t_coef t I + sum_v lambda_v X_v  >= 0
struct Constraint {
  Eigen::MatrixXd E;  // empty: identity
  Eigen::MatrixXd M;
  double sigma = -1.0;
  double t_coef = 1.0;
  Eigen::MatrixXd constant;  // empty: zero
  std::vector<Eigen::MatrixXd> lambda_terms;
  Eigen::Index dim() const { return M.cols(); }
};

enum class Outcome { feasible, infeasible, optimal_not_accepted };

struct BarrierResult {
  Outcome outcome;
  double t;
  Eigen::MatrixXd P;
  Eigen::VectorXd lambda;
  int newton = 0;
};

class Barrier {
 public:
  Barrier(std::vector<Constraint> cons, Eigen::Index n, Eigen::Index n_lambda, bool diagonal,
          double trace_cap)
      : cons_(std::move(cons)), n_(n), nl_(n_lambda), trace_cap_(trace_cap), diagonal_(diagonal) {
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a; b < (diagonal ? a + 1 : n); ++b) basis_.emplace_back(a, b);
    m_ = static_cast<Eigen::Index>(basis_.size());
    nu_ = 1.0 + static_cast<double>(nl_);
    for (const auto& c : cons_) nu_ += static_cast<double>(c.dim());
  }

  Eigen::Index size() const { return m_ + 1 + nl_; }
  double nu() const { return nu_; }
  Eigen::Index t_index() const { return m_; }

  Eigen::MatrixXd unpack_p(const Eigen::VectorXd& z) const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n_, n_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const auto [a, b] = basis_[static_cast<std::size_t>(i)];
      P(a, b) = z(i);
      P(b, a) = z(i);
    }
    return P;
  }
  Eigen::VectorXd pack(const Eigen::MatrixXd& P, double t, const Eigen::VectorXd& lambda) const {
    Eigen::VectorXd z(size());
    for (Eigen::Index i = 0; i < m_; ++i) {
      const auto [a, b] = basis_[static_cast<std::size_t>(i)];
      z(i) = P(a, b);
    }
    z(m_) = t;
    z.tail(nl_) = lambda;
    return z;
  }

  Eigen::MatrixXd value(const Constraint& c, const Eigen::MatrixXd& P, double t,
                        const Eigen::VectorXd& lambda) const {
    Eigen::MatrixXd pm = P * c.M;
    Eigen::MatrixXd f = c.E.size() == 0 ? pm : Eigen::MatrixXd(c.E.transpose() * pm);
    f = c.sigma * (f + f.transpose()).eval();
    if (c.constant.size() != 0) f += c.constant;
    if (c.t_coef != 0.0) f.diagonal().array() += c.t_coef * t;
    for (std::size_t v = 0; v < c.lambda_terms.size(); ++v)
      f += lambda(static_cast<Eigen::Index>(v)) * c.lambda_terms[v];
    return f;
  }

  // Barrier objective tau t - sum log det F - log(trace slack) - sum log lambda.
  // Returns false outside the domain.
  bool evaluate(const Eigen::VectorXd& z, double tau, double& phi, Eigen::VectorXd* grad,
                Eigen::MatrixXd* hess) const {
    const Eigen::MatrixXd P = unpack_p(z);
    const double t = z(m_);
    const Eigen::VectorXd lambda = z.tail(nl_);
    if ((lambda.array() <= 0.0).any()) return false;
    const double slack = trace_cap_ - P.trace();
    if (!(slack > 0.0)) return false;

    phi = tau * t - std::log(slack) - lambda.array().log().sum();
    if (grad) {
      grad->setZero(size());
      hess->setZero(size(), size());
      if (!diagonal_) {
        vec_gf_t_.clear();
        vec_gf_.clear();
        vec_ff_.clear();
        vec_gg_.clear();
      }
      (*grad)(m_) = tau;
      for (Eigen::Index i = 0; i < m_; ++i) {
        const auto [a, b] = basis_[static_cast<std::size_t>(i)];
        if (a != b) continue;
        (*grad)(i) += 1.0 / slack;
        for (Eigen::Index j = 0; j < m_; ++j) {
          const auto [c, d] = basis_[static_cast<std::size_t>(j)];
          if (c == d) (*hess)(i, j) += 1.0 / (slack * slack);
        }
      }
      for (Eigen::Index v = 0; v < nl_; ++v) {
        (*grad)(m_ + 1 + v) -= 1.0 / lambda(v);
        (*hess)(m_ + 1 + v, m_ + 1 + v) += 1.0 / (lambda(v) * lambda(v));
      }
    }

    for (const auto& c : cons_) {
      const Eigen::MatrixXd f = value(c, P, t, lambda);
      const Eigen::LLT<Eigen::MatrixXd> llt(f);
      if (llt.info() != Eigen::Success) return false;
      const auto diag = llt.matrixLLT().diagonal();
      if ((diag.array() <= 0.0).any()) return false;
      phi -= 2.0 * diag.array().log().sum();
      if (grad) accumulate(c, llt, *grad, *hess);
    }
    if (!std::isfinite(phi)) return false;
    if (hess && !diagonal_) gather(*hess);
    if (hess) *hess = hess->selfadjointView<Eigen::Upper>();
    return true;
  }

 private:
  // H_ij = 2 sum over index orderings of
  //   Kgf(q,r) Kgf(x,p) + Kgg(q,x) Kff(r,p), summed over constraints,
  // with (p,q) from basis element i and (r,x) from j.
  void gather(Eigen::MatrixXd& hess) const {
    const Eigen::Index n = n_;
    const Eigen::Index k = static_cast<Eigen::Index>(vec_gf_.size());
    auto stack = [&](const std::vector<Eigen::VectorXd>& cols) {
      Eigen::MatrixXd out(n * n, k);
      for (Eigen::Index c = 0; c < k; ++c) out.col(c) = cols[static_cast<std::size_t>(c)];
      return out;
    };
    // s1(r + q n, x + p n) = sum Kgf(q,r) Kgf(x,p);  s2(r + p n, q + x n) = sum Kff(r,p) Kgg(q,x)
    const Eigen::MatrixXd s1 = stack(vec_gf_t_) * stack(vec_gf_).transpose();
    const Eigen::MatrixXd s2 = stack(vec_ff_) * stack(vec_gg_).transpose();
    auto term = [&](Eigen::Index p, Eigen::Index q, Eigen::Index r, Eigen::Index x) {
      return s1(r + q * n, x + p * n) + s2(r + p * n, q + x * n);
    };
    for (Eigen::Index i = 0; i < m_; ++i) {
      const auto [a, b] = basis_[static_cast<std::size_t>(i)];
      for (Eigen::Index j = i; j < m_; ++j) {
        const auto [c, d] = basis_[static_cast<std::size_t>(j)];
        double h = term(a, b, c, d);
        if (c != d) h += term(a, b, d, c);
        if (a != b) {
          h += term(b, a, c, d);
          if (c != d) h += term(b, a, d, c);
        }
        hess(i, j) += 2.0 * h;
      }
    }
  }

  // Adds the derivatives of -log det F for one constraint; only the upper
  // triangle of the Hessian is written.
  void accumulate(const Constraint& c, const Eigen::LLT<Eigen::MatrixXd>& llt,
                  Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const Eigen::Index N = c.dim();
    const Eigen::MatrixXd W = llt.solve(Eigen::MatrixXd::Identity(N, N));
    const bool ident = c.E.size() == 0;
    const Eigen::MatrixXd mw = c.M * W;  // n x N
    const Eigen::MatrixXd kgf = ident ? mw : Eigen::MatrixXd(mw * c.E.transpose());
    const Eigen::MatrixXd kgg = mw * c.M.transpose();
    const Eigen::MatrixXd kff = ident ? W : Eigen::MatrixXd(c.E * W * c.E.transpose());
    const double s = c.sigma;

    auto pairs = [&](Eigen::Index i, Eigen::Index (&p)[2][2]) {
      const auto [a, b] = basis_[static_cast<std::size_t>(i)];
      p[0][0] = a;
      p[0][1] = b;
      p[1][0] = b;
      p[1][1] = a;
      return a == b ? 1 : 2;
    };

    Eigen::Index pi[2][2];
    for (Eigen::Index i = 0; i < m_; ++i) {
      const int ni = pairs(i, pi);
      double g = 0.0;
      for (int u = 0; u < ni; ++u) g += kgf(pi[u][1], pi[u][0]);
      grad(i) -= 2.0 * s * g;
    }
    // tr(W A_i W A_j) is a sum of products K(q,r) K(x,p); collect them per (p,q)
    // and gather once all constraints are in.
    if (diagonal_) {
      hess.topLeftCorner(m_, m_) +=
          2.0 * s * s *
          (kgf.cwiseProduct(kgf.transpose()) + kgg.cwiseProduct(kff.transpose())).matrix();
    } else {
      const Eigen::MatrixXd kgf_t = kgf.transpose();
      vec_gf_t_.emplace_back(Eigen::Map<const Eigen::VectorXd>(kgf_t.data(), n_ * n_));
      vec_gf_.emplace_back((s * s) * Eigen::Map<const Eigen::VectorXd>(kgf.data(), n_ * n_));
      vec_ff_.emplace_back(Eigen::Map<const Eigen::VectorXd>(kff.data(), n_ * n_));
      vec_gg_.emplace_back((s * s) * Eigen::Map<const Eigen::VectorXd>(kgg.data(), n_ * n_));
    }

    // Dense directions: t and each lambda.
    std::vector<std::pair<Eigen::Index, Eigen::MatrixXd>> dense;
    if (c.t_coef != 0.0)
      dense.emplace_back(m_, c.t_coef * Eigen::MatrixXd::Identity(N, N));
    for (std::size_t v = 0; v < c.lambda_terms.size(); ++v)
      dense.emplace_back(m_ + 1 + static_cast<Eigen::Index>(v), c.lambda_terms[v]);
    for (std::size_t k = 0; k < dense.size(); ++k) {
      const auto& [idx, phi] = dense[k];
      const Eigen::MatrixXd wphi = W * phi;
      const Eigen::MatrixXd q = wphi * W;
      grad(idx) -= wphi.trace();
      for (std::size_t l = k; l < dense.size(); ++l) {
        const auto& [jdx, phi2] = dense[l];
        const double h = (q.cwiseProduct(phi2)).sum();
        if (idx <= jdx)
          hess(idx, jdx) += h;
        else
          hess(jdx, idx) += h;
      }
      const Eigen::MatrixXd mq = c.M * q;
      const Eigen::MatrixXd kq = ident ? mq : Eigen::MatrixXd(mq * c.E.transpose());
      for (Eigen::Index i = 0; i < m_; ++i) {
        const int ni = pairs(i, pi);
        double h = 0.0;
        for (int u = 0; u < ni; ++u) h += kq(pi[u][1], pi[u][0]);
        hess(i, idx) += 2.0 * s * h;
      }
    }
  }

  std::vector<Constraint> cons_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> basis_;
  Eigen::Index n_;
  Eigen::Index nl_;
  Eigen::Index m_ = 0;
  double nu_ = 0.0;
  double trace_cap_;
  bool diagonal_ = false;
  mutable std::vector<Eigen::VectorXd> vec_gf_t_, vec_gf_, vec_ff_, vec_gg_;
};

// Solves H dz = -g with a unit-diagonal (Jacobi) scaling of H, which keeps the
// Cholesky factorization usable late in the barrier path; adds a growing ridge
// if H is still numerically indefinite.
Eigen::VectorXd newton_step(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  const Eigen::VectorXd d = H.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd hs = d.asDiagonal() * H * d.asDiagonal();
  const Eigen::VectorXd rhs = -d.cwiseProduct(g);
  for (double ridge = 0.0; ridge < 1.0; ridge = ridge == 0.0 ? 1e-14 : ridge * 100.0) {
    if (ridge > 0.0) hs.diagonal().array() += ridge;
    const Eigen::LLT<Eigen::MatrixXd> llt(hs);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd y = llt.solve(rhs);
    if (y.allFinite()) return d.cwiseProduct(y);
  }
  throw ConvergenceError("LMI barrier Hessian is not positive definite", g.norm());
}

using Acceptor = std::function<bool(const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

BarrierResult barrier_solve(const std::vector<const LmiBlock*>& blocks, Eigen::Index n,
                            Eigen::Index n_lambda, const LmiOptions& opt, int newton_budget,
                            const Acceptor& accept) {
  std::vector<Constraint> cons;
  for (const auto* b : blocks) {
    Constraint c;
    c.E = b->E;
    c.M = b->M;
    c.sigma = -1.0;
    c.t_coef = 1.0;
    for (const auto& x : b->lambda_terms) c.lambda_terms.push_back(-x);
    cons.push_back(std::move(c));
  }
  {
    Constraint c;  // P - I >= 0
    c.M = 0.5 * Eigen::MatrixXd::Identity(n, n);
    c.sigma = 1.0;
    c.t_coef = 0.0;
    c.constant = -Eigen::MatrixXd::Identity(n, n);
    cons.push_back(std::move(c));
  }
  const double cap = opt.trace_factor * static_cast<double>(n);
  const Barrier barrier(std::move(cons), n, n_lambda, opt.diagonal_p, cap);

  const Eigen::MatrixXd p0 = 2.0 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd l0 = Eigen::VectorXd::Ones(n_lambda);
  double t0 = 0.0;
  for (const auto* b : blocks) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lmi_block_value(*b, p0, l0),
                                                            Eigen::EigenvaluesOnly);
    t0 = std::max(t0, es.eigenvalues().maxCoeff());
  }
  Eigen::VectorXd z = barrier.pack(p0, t0 + 1.0, l0);

  const double nu = barrier.nu();
  double tau = 1.0;
  int newton = 0;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (;;) {
    for (int inner = 0; inner < 60; ++inner) {
      double phi = 0.0;
      if (!barrier.evaluate(z, tau, phi, &g, &H))
        throw ConvergenceError("LMI barrier iterate left the domain", 0.0);
      const Eigen::VectorXd dz = newton_step(H, g);
      const double dec2 = -g.dot(dz);
      if (!(dec2 > 1e-10)) break;
      double step = 1.0;
      double phi_new = 0.0;
      bool moved = false;
      while (step > 1e-14) {
        if (barrier.evaluate(z + step * dz, tau, phi_new, nullptr, nullptr) &&
            phi_new <= phi - 0.25 * step * dec2) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      z += step * dz;
      if (++newton > newton_budget)
        throw ConvergenceError("LMI barrier solver exceeded its Newton budget", nu / tau);
      if (dec2 < 1e-3) break;
    }

    const double t = z(barrier.t_index());
    const double gap = nu / tau;
    const Eigen::MatrixXd P = barrier.unpack_p(z);
    const Eigen::VectorXd lambda = z.tail(n_lambda);
    if (t < -opt.margin && accept(P, lambda))
      return {Outcome::feasible, t, P, lambda, newton};
    if (t - 2.0 * gap > -opt.margin) return {Outcome::infeasible, t, P, lambda, newton};
    // a subset witness that failed the full check only needs to be good enough to
    // rank the violated blocks
    if (t < -opt.margin && gap < 1e-3 * std::abs(t))
      return {Outcome::optimal_not_accepted, t, P, lambda, newton};
    if (gap < opt.gap_tolerance)
      return {t < -opt.margin ? Outcome::optimal_not_accepted : Outcome::infeasible, t, P, lambda,
              newton};
    tau *= 8.0;
  }
}

bool passes(const LmiBlock& b, const Eigen::MatrixXd& P, const Eigen::VectorXd& lambda,
            double margin) {
  Eigen::MatrixXd v = -lmi_block_value(b, P, lambda);
  v.diagonal().array() -= margin;
  return Eigen::LLT<Eigen::MatrixXd>(v).info() == Eigen::Success;
}

double max_eig(const LmiBlock& b, const Eigen::MatrixXd& P, const Eigen::VectorXd& lambda) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lmi_block_value(b, P, lambda),
                                                          Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

LmiResult lmi_feasible(const std::vector<LmiBlock>& blocks, Eigen::Index n,
                       const LmiOptions& options, std::vector<std::size_t>* hint) {
  if (blocks.empty()) throw Error("lmi_feasible: no blocks");
  Eigen::Index n_lambda = 0;
  for (const auto& b : blocks) {
    if (b.M.rows() != n || (b.E.size() != 0 && (b.E.rows() != n || b.E.cols() != b.M.cols())) ||
        (b.E.size() == 0 && b.M.cols() != n))
      throw Error("lmi_feasible: block dimensions do not match P");
    n_lambda = std::max(n_lambda, static_cast<Eigen::Index>(b.lambda_terms.size()));
  }

  std::vector<std::size_t> active;
  if (hint) {
    for (auto k : *hint)
      if (k < blocks.size()) active.push_back(k);
  }
  if (active.empty()) {
    // rank by the largest eigenvalue at P = I: the blocks closest to instability first
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n_lambda);
    std::vector<std::pair<double, std::size_t>> score;
    for (std::size_t k = 0; k < blocks.size(); ++k)
      score.emplace_back(-max_eig(blocks[k], eye, ones), k);
    std::sort(score.begin(), score.end());
    for (std::size_t k = 0; k < std::min(options.initial_active, score.size()); ++k)
      active.push_back(score[k].second);
  }
  std::sort(active.begin(), active.end());

  LmiResult out;
  int budget = options.max_newton;
  std::vector<std::pair<double, std::size_t>> violators;
  const Acceptor accept = [&](const Eigen::MatrixXd& P, const Eigen::VectorXd& lambda) {
    violators.clear();
    for (std::size_t k = 0; k < blocks.size(); ++k)
      if (!passes(blocks[k], P, lambda, options.margin))
        violators.emplace_back(-max_eig(blocks[k], P, lambda), k);
    return violators.empty();
  };

  for (;;) {
    ++out.rounds;
    std::vector<const LmiBlock*> sub;
    for (auto k : active) sub.push_back(&blocks[k]);
    const BarrierResult r = barrier_solve(sub, n, n_lambda, options, budget, accept);
    out.newton_iterations += r.newton;
    budget -= r.newton;
    out.t = r.t;
    out.P = r.P;
    out.lambda = r.lambda;
    if (r.outcome != Outcome::optimal_not_accepted) {
      out.feasible = r.outcome == Outcome::feasible;
      break;
    }
    std::sort(violators.begin(), violators.end());
    std::size_t added = 0;
    for (const auto& [score, k] : violators) {
      if (added == options.add_per_round) break;
      if (std::binary_search(active.begin(), active.end(), k)) continue;
      active.insert(std::upper_bound(active.begin(), active.end(), k), k);
      ++added;
    }
    if (added == 0)
      throw ConvergenceError("LMI active-set loop made no progress", r.t);
  }

  out.worst_eigenvalue = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks)
    out.worst_eigenvalue = std::max(out.worst_eigenvalue, max_eig(b, out.P, out.lambda));
  out.active = active;
  if (hint) *hint = active;
  return out;
}

}  // namespace dcopf
