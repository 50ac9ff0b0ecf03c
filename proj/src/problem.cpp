#include "mta/problem.hpp"

#include <cmath>
#include <fmt/format.h>

#include "mta/rng.hpp"

namespace mta {

namespace {

struct ScalarDerivs {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

ScalarDerivs eval_nonlinearity(Nonlinearity kind, double t) {
  switch (kind) {
    case Nonlinearity::kNone:
      return {};
    case Nonlinearity::kLogistic: {
      const double v = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
      const double s = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
      return {v, s, s * (1.0 - s)};
    }
    case Nonlinearity::kLogQuadratic: {
      const double q = t * t + 2.0;
      return {std::log1p(0.5 * t * t), 2.0 * t / q, (4.0 - 2.0 * t * t) / (q * q)};
    }
    case Nonlinearity::kCubicAbs: {
      const double a = std::abs(t);
      return {a * a * a, 3.0 * t * a, 6.0 * a};
    }
  }
  return {};
}

SymMatrix random_symmetric(std::size_t n, Rng& rng) {
  SymMatrix s(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) s.set(i, j, rng.uniform(-1.0, 1.0));
  return s;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Smallest eigenvalue by bisection on the shift that makes A + t I positive
// definite.
double smallest_eigenvalue(const SymMatrix& a) {
  const double bound = a.frobenius_norm() + 1.0;
  double lo = -bound, hi = bound;  // A + hi I is PD, A + lo I is not
  SymMatrix shifted = a;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * bound; ++it) {
    const double mid = 0.5 * (lo + hi);
    shifted = a;
    shifted.add_identity(mid);
    (linalg::is_positive_definite(shifted) ? hi : lo) = mid;
  }
  return -hi;
}

bool is_indefinite(const SymMatrix& a) {
  SymMatrix neg = a;
  neg.add_scaled(a, -2.0);
  return !linalg::is_positive_definite(a) && !linalg::is_positive_definite(neg);
}

void self_check_gradients(const ProblemInstance& inst) {
  Rng rng(inst.data().seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t n = inst.n();
  for (int p = 0; p < 10; ++p) {
    Vector x = inst.x0();
    for (auto& v : x) v += rng.uniform(-1.0, 1.0);
    const double h = 1e-5 * (1.0 + linalg::norm2(x));
    for (std::size_t i = 0; i <= inst.m(); ++i) {
      const Vector g = inst.gradient(i, x);
      Vector fd(n);
      for (std::size_t j = 0; j < n; ++j) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd[j] = (inst.value(i, xp) - inst.value(i, xm)) / (2.0 * h);
      }
      const double err = linalg::norm2(linalg::subtract(fd, g));
      if (err > 1e-5 * std::max(1.0, linalg::norm2(g))) {
        throw OracleCheckError(fmt::format(
            "gradient of F_{} disagrees with central differences (error {:.3e})", i, err));
      }
    }
  }
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::kNonconvex: return "nonconvex";
    case Family::kConvex: return "convex";
    case Family::kStronglyConvex: return "strongly-convex";
    case Family::kCustom: return "custom";
  }
  return "custom";
}

Family family_from_string(const std::string& s) {
  if (s == "nonconvex") return Family::kNonconvex;
  if (s == "convex") return Family::kConvex;
  if (s == "strongly-convex") return Family::kStronglyConvex;
  if (s == "custom") return Family::kCustom;
  throw std::invalid_argument("unknown instance family: " + s);
}

ProblemInstance ProblemInstance::create(Data data, InstanceChecks checks) {
  const std::size_t n = data.n, m = data.m;
  if (n == 0) throw std::invalid_argument("instance dimension n must be positive");
  if (data.functions.size() != m + 1 || data.lip_grad.size() != m + 1 ||
      data.lip_hess.size() != m + 1) {
    throw std::invalid_argument("instance needs m + 1 functions and Lipschitz bounds");
  }
  if (data.convex.empty()) data.convex.assign(m + 1, false);
  if (data.convex.size() != m + 1) throw std::invalid_argument("convexity flags need m + 1 entries");
  if (data.x0.size() != n) throw std::invalid_argument("x0 has the wrong dimension");
  for (const auto& f : data.functions) {
    if (f.a.size() != n || f.c.size() != n || f.Q.size() != n) {
      throw std::invalid_argument("function data has the wrong dimension");
    }
  }
  for (std::size_t i = 0; i <= m; ++i) {
    if (!(data.lip_grad[i] > 0.0) || !(data.lip_hess[i] > 0.0)) {
      throw std::invalid_argument(fmt::format("Lipschitz bounds of F_{} must be positive", i));
    }
  }
  for (double v : data.x0) {
    if (!std::isfinite(v)) throw std::invalid_argument("x0 must be finite");
  }
  ProblemInstance inst(std::move(data));
  const double viol = max_violation(inst, inst.x0());
  if (viol > 0.0) {
    throw InfeasibleStartError(
        fmt::format("x0 violates a constraint by {:.6g}; a feasible starting point is required", viol));
  }
  if (checks.oracle_self_check) self_check_gradients(inst);
  return inst;
}

double ProblemInstance::lipschitz_for_order(std::size_t i, int order) const {
  return order == 1 ? lip_grad(i) : lip_hess(i);
}

Evaluation ProblemInstance::evaluate(std::size_t i, std::span<const double> x, int order) const {
  if (i > data_.m) throw std::out_of_range("function index out of range");
  if (x.size() != data_.n) throw std::invalid_argument("evaluate: x has the wrong dimension");
  const CompositeFunction& f = data_.functions[i];
  const double t = linalg::dot(f.a, x) + f.b;
  const ScalarDerivs phi = eval_nonlinearity(f.kind, t);
  const Vector qx = f.Q.multiply(x);

  Evaluation e;
  e.value = phi.v + 0.5 * linalg::dot(x, qx) + linalg::dot(f.c, x) + f.d;
  if (order >= 1) {
    Vector g = qx;
    linalg::axpy(1.0, f.c, g);
    if (f.kind != Nonlinearity::kNone) linalg::axpy(phi.d1, f.a, g);
    e.gradient = std::move(g);
  }
  if (order >= 2) {
    SymMatrix h = f.Q;
    if (f.kind != Nonlinearity::kNone) h.add_outer(f.a, phi.d2);
    e.hessian = std::move(h);
  }
  return e;
}

double ProblemInstance::value(std::size_t i, std::span<const double> x) const {
  return evaluate(i, x, 0).value;
}

Vector ProblemInstance::gradient(std::size_t i, std::span<const double> x) const {
  return *evaluate(i, x, 1).gradient;
}

SymMatrix ProblemInstance::hessian(std::size_t i, std::span<const double> x) const {
  return *evaluate(i, x, 2).hessian;
}

double max_violation(const ProblemInstance& inst, std::span<const double> x) {
  double v = 0.0;
  for (std::size_t i = 1; i <= inst.m(); ++i) v = std::max(v, inst.value(i, x));
  return v;
}

TaylorData make_taylor_data(const ProblemInstance& inst, std::span<const double> center,
                            std::span<const int> orders) {
  if (orders.size() != inst.m() + 1) throw std::invalid_argument("need one order per function");
  TaylorData td;
  td.center.assign(center.begin(), center.end());
  for (std::size_t i = 0; i <= inst.m(); ++i) {
    Evaluation e = inst.evaluate(i, center, orders[i]);
    td.f.push_back(e.value);
    td.g.push_back(std::move(*e.gradient));
    td.h.push_back(std::move(e.hessian));
  }
  return td;
}

double taylor_value(const TaylorData& td, std::size_t i, int order, std::span<const double> y) {
  const Vector s = linalg::subtract(y, td.center);
  double v = td.f.at(i) + linalg::dot(td.g.at(i), s);
  if (order == 2) {
    if (!td.h.at(i)) throw std::logic_error("second-order Taylor value requested without a Hessian");
    v += 0.5 * td.h[i]->quad_form(s);
  }
  return v;
}

ProblemInstance generate_benchmark(std::size_t n, std::size_t m, std::uint64_t seed,
                                   InstanceChecks checks) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  Rng rng(seed);

  // Indefinite quadratics shifted by a common multiple of I so that their
  // average is positive definite: every direction then has some F_i growing
  // quadratically, which keeps the feasible sublevel sets bounded. With m = 0
  // the single shifted matrix is positive definite, so no indefiniteness check.
  constexpr double kAverageCurvature = 0.25;
  std::vector<SymMatrix> quads;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 10000) throw std::runtime_error("could not draw indefinite quadratics");
    quads.clear();
    SymMatrix mean(n);
    for (std::size_t i = 0; i <= m; ++i) {
      quads.push_back(random_symmetric(n, rng));
      mean.add_scaled(quads.back(), 1.0 / static_cast<double>(m + 1));
    }
    const double shift = kAverageCurvature - smallest_eigenvalue(mean);
    bool ok = true;
    for (auto& q : quads) {
      q.add_identity(shift);
      if (n >= 2 && m >= 1 && !is_indefinite(q)) ok = false;
    }
    if (ok) break;
  }

  ProblemInstance::Data d;
  d.n = n;
  d.m = m;
  d.seed = seed;
  d.family = Family::kNonconvex;
  d.x0.assign(n, 0.0);
  for (std::size_t i = 0; i <= m; ++i) {
    CompositeFunction f;
    f.kind = i == 0 ? Nonlinearity::kLogistic : Nonlinearity::kLogQuadratic;
    f.a = random_vector(n, rng);
    f.c = random_vector(n, rng);
    f.Q = quads[i];
    if (i > 0) {
      f.b = rng.uniform(0.5, 2.0);
      f.d = -std::log1p(0.5 * f.b * f.b) - kFeasibilityMargin;
    }
    const double na = linalg::norm2(f.a);
    const double scale = i == 0 ? 1.0 : 2.0;
    d.lip_grad.push_back(scale * na * na + f.Q.frobenius_norm());
    d.lip_hess.push_back(2.0 * scale * na * na * na);
    d.functions.push_back(std::move(f));
  }
  d.functions[0].d = rng.uniform(-1.0, 1.0);
  d.convex.assign(m + 1, false);
  return ProblemInstance::create(std::move(d), checks);
}

ProblemInstance generate_convex_benchmark(std::size_t n, std::size_t m, std::uint64_t seed,
                                          double sigma, InstanceChecks checks) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  Rng rng(seed);
  ProblemInstance::Data d;
  d.n = n;
  d.m = m;
  d.seed = seed;
  d.sigma = sigma;
  d.family = sigma > 0.0 ? Family::kStronglyConvex : Family::kConvex;
  d.x0.assign(n, 0.0);
  for (std::size_t i = 0; i <= m; ++i) {
    CompositeFunction f;
    f.kind = Nonlinearity::kLogistic;
    // Q = R^T R
    std::vector<double> r(n * n);
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
    f.Q = SymMatrix(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += r[k * n + a] * r[k * n + b];
        f.Q.set(a, b, s);
      }
    }
    if (i == 0) f.Q.add_identity(sigma);
    f.a = random_vector(n, rng);
    f.c = random_vector(n, rng);
    if (i > 0) f.d = -std::log(2.0) - kFeasibilityMargin;
    const double na = linalg::norm2(f.a);
    d.lip_grad.push_back(na * na + f.Q.frobenius_norm());
    d.lip_hess.push_back(2.0 * na * na * na);
    d.functions.push_back(std::move(f));
  }
  d.functions[0].d = rng.uniform(-1.0, 1.0);
  d.convex.assign(m + 1, true);
  return ProblemInstance::create(std::move(d), checks);
}

}  // namespace mta
