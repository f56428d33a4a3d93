#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace coordfit {

enum class ActivationKind {
  Relu,
  Prelu,
  Sin,
  Tanh,
  Sigmoid,
  Silu,
  Softplus,
  Gaussian,
  Quadratic,
  MultiQuadratic,
  Laplacian,
  SuperGaussian,
  ExpSin,
};

inline constexpr std::array<ActivationKind, 13> kAllActivationKinds = {
    ActivationKind::Relu,      ActivationKind::Prelu,          ActivationKind::Sin,
    ActivationKind::Tanh,      ActivationKind::Sigmoid,        ActivationKind::Silu,
    ActivationKind::Softplus,  ActivationKind::Gaussian,       ActivationKind::Quadratic,
    ActivationKind::MultiQuadratic, ActivationKind::Laplacian, ActivationKind::SuperGaussian,
    ActivationKind::ExpSin,
};

/// An activation and its shape parameters. `a` is ignored for relu, tanh,
/// sigmoid and silu; `b` is only read by the super-gaussian.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::Relu;
  double a = 1.0;
  double b = 2.0;

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

std::string_view kind_name(ActivationKind kind);
std::optional<ActivationKind> kind_from_name(std::string_view name);

bool uses_a(ActivationKind kind);
inline bool uses_b(ActivationKind kind) { return kind == ActivationKind::SuperGaussian; }

/// Shape parameters used when a config string omits them.
ActivationSpec default_activation(ActivationKind kind);

/// Throws InvalidArgument when the parameters violate the kind's domain.
void validate(const ActivationSpec& spec);

/// Parses `name[:a=<v>[,b=<v>]]`, e.g. `gaussian:a=0.05` or
/// `supergaussian:a=0.05,b=2`. Missing parameters take their defaults.
ActivationSpec parse_activation(std::string_view text);

/// Canonical config string; parse_activation(format_activation(s)) == s.
std::string format_activation(const ActivationSpec& spec);

struct ActivationProfile {
  bool r1 = false;  // parameterized, first-derivative magnitude controllable
  bool r2 = false;  // non-constant first derivative
};

ActivationProfile classify_r1_r2(ActivationKind kind);

namespace detail {

template <typename T>
T stable_sigmoid(T x) {
  using std::exp;
  if (x >= T(0)) return T(1) / (T(1) + exp(-x));
  const T e = exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
T act_eval(const ActivationSpec& s, T x) {
  using std::abs;
  using std::cos;
  using std::exp;
  using std::log1p;
  using std::sin;
  using std::sqrt;
  using std::tanh;
  const T a = T(s.a);
  switch (s.kind) {
    case ActivationKind::Relu: return x > T(0) ? x : T(0);
    case ActivationKind::Prelu: return x > T(0) ? x : a * x;
    case ActivationKind::Sin: return sin(a * x);
    case ActivationKind::Tanh: return tanh(x);
    case ActivationKind::Sigmoid: return detail::stable_sigmoid(x);
    case ActivationKind::Silu: return x * detail::stable_sigmoid(x);
    case ActivationKind::Softplus: {
      const T ax = a * x;
      if (ax > T(30)) return x + log1p(exp(-ax)) / a;
      return log1p(exp(ax)) / a;
    }
    case ActivationKind::Gaussian: return exp(T(-0.5) * x * x / (a * a));
    case ActivationKind::Quadratic: return T(1) / (T(1) + a * a * x * x);
    case ActivationKind::MultiQuadratic: return T(1) / sqrt(T(1) + a * a * x * x);
    case ActivationKind::Laplacian: return exp(-abs(x) / a);
    case ActivationKind::SuperGaussian: return exp(T(-0.5) * T(s.b) * x * x / (a * a));
    case ActivationKind::ExpSin: return exp(sin(a * x));
  }
  return T(0);
}

/// First derivative. Kinks: relu'(0) = 0, prelu'(0) = a, laplacian'(0) = 0.
template <typename T>
T act_d1(const ActivationSpec& s, T x) {
  using std::abs;
  using std::cos;
  using std::exp;
  using std::pow;
  using std::sin;
  using std::tanh;
  const T a = T(s.a);
  switch (s.kind) {
    case ActivationKind::Relu: return x > T(0) ? T(1) : T(0);
    case ActivationKind::Prelu: return x > T(0) ? T(1) : a;
    case ActivationKind::Sin: return a * cos(a * x);
    case ActivationKind::Tanh: {
      const T t = tanh(x);
      return T(1) - t * t;
    }
    case ActivationKind::Sigmoid: {
      const T sg = detail::stable_sigmoid(x);
      return sg * (T(1) - sg);
    }
    case ActivationKind::Silu: {
      const T sg = detail::stable_sigmoid(x);
      return sg * (T(1) + x * (T(1) - sg));
    }
    case ActivationKind::Softplus: return detail::stable_sigmoid(a * x);
    case ActivationKind::Gaussian: return -x / (a * a) * exp(T(-0.5) * x * x / (a * a));
    case ActivationKind::Quadratic: {
      const T u = T(1) + a * a * x * x;
      return T(-2) * a * a * x / (u * u);
    }
    case ActivationKind::MultiQuadratic: {
      const T u = T(1) + a * a * x * x;
      return -a * a * x * pow(u, T(-1.5));
    }
    case ActivationKind::Laplacian: {
      if (x == T(0)) return T(0);
      const T sign = x > T(0) ? T(1) : T(-1);
      return -sign * exp(-abs(x) / a) / a;
    }
    case ActivationKind::SuperGaussian: {
      const T b = T(s.b);
      return -b * x / (a * a) * exp(T(-0.5) * b * x * x / (a * a));
    }
    case ActivationKind::ExpSin: return a * cos(a * x) * exp(sin(a * x));
  }
  return T(0);
}

/// Second derivative. laplacian''(0) takes the right limit e^0 / a^2.
template <typename T>
T act_d2(const ActivationSpec& s, T x) {
  using std::abs;
  using std::cos;
  using std::exp;
  using std::pow;
  using std::sin;
  using std::tanh;
  const T a = T(s.a);
  switch (s.kind) {
    case ActivationKind::Relu:
    case ActivationKind::Prelu: return T(0);
    case ActivationKind::Sin: return -a * a * sin(a * x);
    case ActivationKind::Tanh: {
      const T t = tanh(x);
      return T(-2) * t * (T(1) - t * t);
    }
    case ActivationKind::Sigmoid: {
      const T sg = detail::stable_sigmoid(x);
      return sg * (T(1) - sg) * (T(1) - T(2) * sg);
    }
    case ActivationKind::Silu: {
      const T sg = detail::stable_sigmoid(x);
      return sg * (T(1) - sg) * (T(2) + x * (T(1) - T(2) * sg));
    }
    case ActivationKind::Softplus: {
      const T sg = detail::stable_sigmoid(a * x);
      return a * sg * (T(1) - sg);
    }
    case ActivationKind::Gaussian:
      return (x * x - a * a) / (a * a * a * a) * exp(T(-0.5) * x * x / (a * a));
    case ActivationKind::Quadratic: {
      const T u = T(1) + a * a * x * x;
      return T(2) * a * a * (T(3) * a * a * x * x - T(1)) / (u * u * u);
    }
    case ActivationKind::MultiQuadratic: {
      const T u = T(1) + a * a * x * x;
      return (T(2) * a * a * a * a * x * x - a * a) * pow(u, T(-2.5));
    }
    case ActivationKind::Laplacian: return exp(-abs(x) / a) / (a * a);
    case ActivationKind::SuperGaussian: {
      const T b = T(s.b);
      return b * (b * x * x - a * a) / (a * a * a * a) * exp(T(-0.5) * b * x * x / (a * a));
    }
    case ActivationKind::ExpSin: {
      const T sn = sin(a * x);
      const T cs = cos(a * x);
      return -a * a * exp(sn) * (sn - cs * cs);
    }
  }
  return T(0);
}

/// max |psi'| over [lo, hi]: a uniform grid of `samples` points (endpoints
/// included) plus the analytic maximizers of |psi'| that fall inside the
/// interval. For the laplacian the supremum 1/a at the kink is used.
double d1_max_abs(const ActivationSpec& spec, double lo, double hi, int samples = 2001);

/// Elementwise activation over a batch. When `d1` is non-null it receives
/// psi'(z) with the same kink conventions as act_d1.
void apply_activation(const ActivationSpec& spec, const Eigen::ArrayXXd& z, Eigen::ArrayXXd& h,
                      Eigen::ArrayXXd* d1);

}  // namespace coordfit
