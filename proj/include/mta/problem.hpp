#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mta/linalg.hpp"

namespace mta {

using linalg::SymMatrix;
using linalg::Vector;

// Scalar nonlinearity applied to the affine form <a, x> + b.
enum class Nonlinearity {
  kNone,          // 0
  kLogistic,      // log(1 + exp(t))
  kLogQuadratic,  // log(t^2 / 2 + 1)
  kCubicAbs,      // |t|^3, for hand-built test instances
};

// F(x) = phi(<a, x> + b) + 1/2 x^T Q x + <c, x> + d
struct CompositeFunction {
  Nonlinearity kind = Nonlinearity::kNone;
  Vector a;
  double b = 0.0;
  SymMatrix Q;
  Vector c;
  double d = 0.0;
};

enum class Family { kNonconvex, kConvex, kStronglyConvex, kCustom };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct Evaluation {
  double value = 0.0;
  std::optional<Vector> gradient;
  std::optional<SymMatrix> hessian;
};

class InfeasibleStartError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InstanceChecks {
  // Compare analytic gradients against central differences at 10 points.
  bool oracle_self_check = true;
};

// Objective (index 0) and m inequality constraints F_i(x) <= 0 (indices
// 1..m), with declared Lipschitz bounds for gradients and Hessians. Immutable
// once created.
class ProblemInstance {
 public:
  struct Data {
    std::size_t n = 0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    Family family = Family::kCustom;
    double sigma = 0.0;
    std::vector<CompositeFunction> functions;  // size m + 1
    Vector x0;
    std::vector<double> lip_grad;  // size m + 1
    std::vector<double> lip_hess;  // size m + 1
    std::vector<bool> convex;      // size m + 1
  };

  // Validates shapes, positivity of the Lipschitz bounds, feasibility of x0
  // (throws InfeasibleStartError) and optionally the gradient oracle.
  static ProblemInstance create(Data data, InstanceChecks checks = {});

  std::size_t n() const { return data_.n; }
  std::size_t m() const { return data_.m; }
  const Data& data() const { return data_; }
  const Vector& x0() const { return data_.x0; }
  double lip_grad(std::size_t i) const { return data_.lip_grad.at(i); }
  double lip_hess(std::size_t i) const { return data_.lip_hess.at(i); }
  // Lipschitz bound relevant to a Taylor model of the given order: the
  // gradient constant for order 1, the Hessian constant for order 2.
  double lipschitz_for_order(std::size_t i, int order) const;

  // order 0: value only, 1: + gradient, 2: + Hessian.
  Evaluation evaluate(std::size_t i, std::span<const double> x, int order) const;
  double value(std::size_t i, std::span<const double> x) const;
  Vector gradient(std::size_t i, std::span<const double> x) const;
  SymMatrix hessian(std::size_t i, std::span<const double> x) const;

 private:
  explicit ProblemInstance(Data d) : data_(std::move(d)) {}
  Data data_;
};

// max(0, max_i F_i(x)); 0 when there are no constraints.
double max_violation(const ProblemInstance& inst, std::span<const double> x);

// Value/gradient/Hessian of every F_i frozen at a center point.
struct TaylorData {
  Vector center;
  std::vector<double> f;
  std::vector<Vector> g;
  std::vector<std::optional<SymMatrix>> h;
};

// orders[i] in {1, 2} selects whether the Hessian of F_i is stored.
TaylorData make_taylor_data(const ProblemInstance& inst, std::span<const double> center,
                            std::span<const int> orders);

// T_order(y; center) for function i.
double taylor_value(const TaylorData& td, std::size_t i, int order, std::span<const double> y);

// Random instance of the nonconvex benchmark family: logistic objective and
// log-quadratic constraints plus indefinite quadratic and linear terms. x0 = 0
// is strictly feasible with F_i(0) = -0.1.
ProblemInstance generate_benchmark(std::size_t n, std::size_t m, std::uint64_t seed,
                                   InstanceChecks checks = {});

// Convex variant: PSD quadratics, logistic constraints, sigma * I added to
// the objective quadratic (sigma > 0 gives a strongly convex objective).
ProblemInstance generate_convex_benchmark(std::size_t n, std::size_t m, std::uint64_t seed,
                                          double sigma, InstanceChecks checks = {});

// Constant used to push F_i(0) strictly below zero in both generators.
inline constexpr double kFeasibilityMargin = 0.1;

}  // namespace mta
