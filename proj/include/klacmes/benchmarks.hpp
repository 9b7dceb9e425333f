#ifndef KLACMES_BENCHMARKS_HPP
#define KLACMES_BENCHMARKS_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/QR>

#include "klacmes/rng.hpp"

namespace klacmes {

enum class FunctionId {
  sphere,
  ellipsoid,
  rosenbrock,
  discus,
  cigar,
  rastrigin,
  attractive_sector,
};

inline const char* to_string(FunctionId id) {
  switch (id) {
    case FunctionId::sphere: return "sphere";
    case FunctionId::ellipsoid: return "ellipsoid";
    case FunctionId::rosenbrock: return "rosenbrock";
    case FunctionId::discus: return "discus";
    case FunctionId::cigar: return "cigar";
    case FunctionId::rastrigin: return "rastrigin";
    case FunctionId::attractive_sector: return "attractive_sector";
  }
  throw std::invalid_argument("unknown function id");
}

inline FunctionId parse_function_id(const std::string& name) {
  for (FunctionId id : {FunctionId::sphere, FunctionId::ellipsoid, FunctionId::rosenbrock,
                        FunctionId::discus, FunctionId::cigar, FunctionId::rastrigin,
                        FunctionId::attractive_sector})
    if (name == to_string(id)) return id;
  throw std::invalid_argument("unknown function id: " + name);
}

struct BenchmarkSpec {
  FunctionId function_id = FunctionId::sphere;
  int dim = 2;
  bool rotate = false;
  double power = 1.0;      // monotone transform exponent
  double condition = 1e6;  // for ellipsoid / discus / cigar
};

inline void validate(const BenchmarkSpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("benchmark dimension must be >= 1");
  if (spec.function_id == FunctionId::rosenbrock && spec.dim < 2)
    throw std::invalid_argument("rosenbrock needs dimension >= 2");
  if (!(spec.power > 0.0)) throw std::invalid_argument("power must be positive");
  if (!(spec.condition > 0.0)) throw std::invalid_argument("condition must be positive");
}

/// A concrete instance: optimum shift, optional random rotation, and an
/// evaluation counter for budget audits.
struct BenchmarkInstance {
  BenchmarkSpec spec;
  Eigen::VectorXd optimum;   // f attains 0 here (power 1)
  Eigen::MatrixXd rotation;  // orthogonal; identity when spec.rotate is false
  mutable long eval_count = 0;
};

/// Optimum uniform in [-4,4]^n (inside the [-5,5] start box with margin);
/// rotation from the QR factorization of a seeded Gaussian matrix with
/// sign-corrected diagonal, i.e. Haar-distributed.
inline BenchmarkInstance make_instance(const BenchmarkSpec& spec, std::uint64_t seed) {
  validate(spec);
  BenchmarkInstance inst;
  inst.spec = spec;
  Rng rng(mix64(seed ^ 0xb0a710ad5eed0001ULL));
  inst.optimum = rng.uniform_vector(spec.dim, -4.0, 4.0);
  if (spec.rotate) {
    Eigen::MatrixXd g(spec.dim, spec.dim);
    for (int i = 0; i < spec.dim; ++i)
      for (int j = 0; j < spec.dim; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    inst.rotation = qr.householderQ();
    const Eigen::VectorXd diag = qr.matrixQR().diagonal();
    for (int i = 0; i < spec.dim; ++i)
      if (diag[i] < 0.0) inst.rotation.col(i) = -inst.rotation.col(i);
  } else {
    inst.rotation = Eigen::MatrixXd::Identity(spec.dim, spec.dim);
  }
  return inst;
}

namespace detail {

inline double base_value(const BenchmarkInstance& inst, const Eigen::VectorXd& z) {
  const int n = static_cast<int>(z.size());
  const double cond = inst.spec.condition;
  switch (inst.spec.function_id) {
    case FunctionId::sphere:
      return z.squaredNorm();
    case FunctionId::ellipsoid: {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double f = n == 1 ? 1.0 : std::pow(cond, static_cast<double>(i) / (n - 1));
        sum += f * z[i] * z[i];
      }
      return sum;
    }
    case FunctionId::rosenbrock: {
      double sum = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        const double a = z[i] * z[i] - z[i + 1];
        const double b = z[i] - 1.0;
        sum += 100.0 * a * a + b * b;
      }
      return sum;
    }
    case FunctionId::discus: {
      double sum = cond * z[0] * z[0];
      for (int i = 1; i < n; ++i) sum += z[i] * z[i];
      return sum;
    }
    case FunctionId::cigar: {
      double sum = z[0] * z[0];
      for (int i = 1; i < n; ++i) sum += cond * z[i] * z[i];
      return sum;
    }
    case FunctionId::rastrigin: {
      constexpr double kTwoPi = 6.283185307179586476925286766559;
      double cos_sum = 0.0;
      for (int i = 0; i < n; ++i) cos_sum += std::cos(kTwoPi * z[i]);
      return 10.0 * (n - cos_sum) + z.squaredNorm();
    }
    case FunctionId::attractive_sector: {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double s = (z[i] * inst.optimum[i] > 0.0) ? 100.0 : 1.0;
        sum += s * s * z[i] * z[i];
      }
      return sum;
    }
  }
  throw std::logic_error("unreachable");
}

// Small integer powers multiply out exactly, so evaluate(power 2) is
// bit-identical to evaluate(power 1) squared.
inline double apply_power(double v, double p) {
  if (p == 1.0) return v;
  if (p == 2.0) return v * v;
  if (p == 3.0) return v * v * v;
  if (p == 4.0) {
    const double s = v * v;
    return s * s;
  }
  return std::pow(v, p);
}

// the base optimum of the untransformed function, in z coordinates
inline Eigen::VectorXd reference_point(const BenchmarkSpec& spec) {
  if (spec.function_id == FunctionId::rosenbrock)
    return Eigen::VectorXd::Ones(spec.dim);
  return Eigen::VectorXd::Zero(spec.dim);
}

}  // namespace detail

/// base(rotation * (x - optimum) + reference)^power, counting the call.
inline double evaluate(const BenchmarkInstance& inst, const Eigen::VectorXd& x) {
  if (x.size() != inst.spec.dim) throw std::invalid_argument("evaluate: dimension mismatch");
  const Eigen::VectorXd z =
      inst.rotation * (x - inst.optimum) + detail::reference_point(inst.spec);
  ++inst.eval_count;
  return detail::apply_power(detail::base_value(inst, z), inst.spec.power);
}

}  // namespace klacmes

#endif  // KLACMES_BENCHMARKS_HPP
