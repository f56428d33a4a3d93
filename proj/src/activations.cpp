#include "coordfit/activations.hpp"

#include <algorithm>
#include <charconv>
#include <numbers>
#include <vector>

#include "coordfit/error.hpp"

namespace coordfit {

namespace {

struct NameEntry {
  ActivationKind kind;
  std::string_view name;
};

constexpr std::array<NameEntry, 13> kNames = {{
    {ActivationKind::Relu, "relu"},
    {ActivationKind::Prelu, "prelu"},
    {ActivationKind::Sin, "sin"},
    {ActivationKind::Tanh, "tanh"},
    {ActivationKind::Sigmoid, "sigmoid"},
    {ActivationKind::Silu, "silu"},
    {ActivationKind::Softplus, "softplus"},
    {ActivationKind::Gaussian, "gaussian"},
    {ActivationKind::Quadratic, "quadratic"},
    {ActivationKind::MultiQuadratic, "multiquadratic"},
    {ActivationKind::Laplacian, "laplacian"},
    {ActivationKind::SuperGaussian, "supergaussian"},
    {ActivationKind::ExpSin, "expsin"},
}};

double parse_double(std::string_view text, std::string_view context) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::InvalidArgument,
                "bad number '" + std::string(text) + "' in activation '" + std::string(context) + "'");
  }
  return value;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view kind_name(ActivationKind kind) {
  for (const auto& e : kNames) {
    if (e.kind == kind) return e.name;
  }
  return "unknown";
}

std::optional<ActivationKind> kind_from_name(std::string_view name) {
  for (const auto& e : kNames) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

bool uses_a(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu:
    case ActivationKind::Tanh:
    case ActivationKind::Sigmoid:
    case ActivationKind::Silu: return false;
    default: return true;
  }
}

ActivationSpec default_activation(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Gaussian: return {kind, 0.05, 2.0};
    case ActivationKind::Sin: return {kind, 30.0, 2.0};
    // a = 1 would make PReLU the identity map.
    case ActivationKind::Prelu: return {kind, 0.25, 2.0};
    default: return {kind, 1.0, 2.0};
  }
}

void validate(const ActivationSpec& spec) {
  const std::string name(kind_name(spec.kind));
  if (spec.kind == ActivationKind::Prelu) {
    if (!(spec.a > 0.0 && spec.a <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "prelu requires a in (0, 1], got " + shortest(spec.a));
    }
  } else if (uses_a(spec.kind) && !(spec.a > 0.0 && std::isfinite(spec.a))) {
    throw Error(ErrorKind::InvalidArgument, name + " requires a > 0, got " + shortest(spec.a));
  }
  if (uses_b(spec.kind) && !(spec.b > 0.0 && std::isfinite(spec.b))) {
    throw Error(ErrorKind::InvalidArgument, name + " requires b > 0, got " + shortest(spec.b));
  }
}

ActivationSpec parse_activation(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const auto kind = kind_from_name(name);
  if (!kind) throw Error(ErrorKind::InvalidArgument, "unknown activation '" + std::string(name) + "'");
  ActivationSpec spec = default_activation(*kind);
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorKind::InvalidArgument, "expected key=value in '" + std::string(text) + "'");
      }
      const std::string_view key = item.substr(0, eq);
      const double value = parse_double(item.substr(eq + 1), text);
      if (key == "a" && uses_a(*kind)) {
        spec.a = value;
      } else if (key == "b" && uses_b(*kind)) {
        spec.b = value;
      } else {
        throw Error(ErrorKind::InvalidArgument,
                    "parameter '" + std::string(key) + "' not accepted by " + std::string(name));
      }
    }
  }
  validate(spec);
  return spec;
}

std::string format_activation(const ActivationSpec& spec) {
  std::string out(kind_name(spec.kind));
  if (uses_a(spec.kind)) out += ":a=" + shortest(spec.a);
  if (uses_b(spec.kind)) out += ",b=" + shortest(spec.b);
  return out;
}

ActivationProfile classify_r1_r2(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu: return {false, false};
    case ActivationKind::Prelu: return {true, false};
    case ActivationKind::Softplus: return {true, false};
    case ActivationKind::Tanh:
    case ActivationKind::Sigmoid:
    case ActivationKind::Silu: return {false, true};
    case ActivationKind::Sin:
    case ActivationKind::Gaussian:
    case ActivationKind::Quadratic:
    case ActivationKind::MultiQuadratic:
    case ActivationKind::Laplacian:
    case ActivationKind::SuperGaussian:
    case ActivationKind::ExpSin: return {true, true};
  }
  return {};
}

double d1_max_abs(const ActivationSpec& spec, double lo, double hi, int samples) {
  if (!(lo < hi) || samples < 2) {
    throw Error(ErrorKind::InvalidArgument, "d1_max_abs needs lo < hi and samples >= 2");
  }
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = i + 1 == samples ? hi : lo + (hi - lo) * i / (samples - 1);
    best = std::max(best, std::abs(act_d1(spec, x)));
  }

  const double a = spec.a;
  std::vector<double> critical;
  auto add_periodic = [&](double phase, double period) {
    // every x = (phase + k * period) / a inside [lo, hi]
    const double k0 = std::ceil((lo * a - phase) / period);
    const double k1 = std::floor((hi * a - phase) / period);
    if (k1 >= k0) critical.push_back((phase + k0 * period) / a);
  };
  constexpr double pi = std::numbers::pi;
  switch (spec.kind) {
    case ActivationKind::Gaussian: critical = {-a, a}; break;
    case ActivationKind::SuperGaussian: critical = {-a / std::sqrt(spec.b), a / std::sqrt(spec.b)}; break;
    case ActivationKind::Quadratic: critical = {-1.0 / (std::sqrt(3.0) * a), 1.0 / (std::sqrt(3.0) * a)}; break;
    case ActivationKind::MultiQuadratic: critical = {-1.0 / (std::sqrt(2.0) * a), 1.0 / (std::sqrt(2.0) * a)}; break;
    case ActivationKind::Tanh:
    case ActivationKind::Sigmoid: critical = {0.0}; break;
    case ActivationKind::Sin: add_periodic(0.0, pi); break;
    case ActivationKind::ExpSin: {
      // |psi'| peaks where sin(ax) = (sqrt(5) - 1) / 2, on either sign of cos(ax).
      const double phase = std::asin((std::sqrt(5.0) - 1.0) / 2.0);
      add_periodic(phase, 2.0 * pi);
      add_periodic(pi - phase, 2.0 * pi);
      break;
    }
    case ActivationKind::Laplacian:
      if (lo <= 0.0 && hi >= 0.0) best = std::max(best, 1.0 / a);
      break;
    case ActivationKind::Relu:
      if (hi > 0.0) best = std::max(best, 1.0);
      break;
    default: break;
  }
  for (double x : critical) {
    if (x >= lo && x <= hi) best = std::max(best, std::abs(act_d1(spec, x)));
  }
  return best;
}

void apply_activation(const ActivationSpec& spec, const Eigen::ArrayXXd& z, Eigen::ArrayXXd& h,
                      Eigen::ArrayXXd* d1) {
  const double a = spec.a;
  switch (spec.kind) {
    case ActivationKind::Gaussian:
    case ActivationKind::SuperGaussian: {
      const double b = spec.kind == ActivationKind::SuperGaussian ? spec.b : 1.0;
      const double scale = -0.5 * b / (a * a);
      h = (z.square() * scale).exp();
      if (d1) *d1 = z * (2.0 * scale) * h;
      return;
    }
    case ActivationKind::Quadratic: {
      const Eigen::ArrayXXd u = 1.0 + (a * a) * z.square();
      h = u.inverse();
      if (d1) *d1 = (-2.0 * a * a) * z * h.square();
      return;
    }
    case ActivationKind::MultiQuadratic: {
      const Eigen::ArrayXXd u = 1.0 + (a * a) * z.square();
      h = u.rsqrt();
      if (d1) *d1 = (-a * a) * z * h.cube();
      return;
    }
    case ActivationKind::Laplacian: {
      h = (z.abs() * (-1.0 / a)).exp();
      if (d1) *d1 = -z.sign() * h / a;
      return;
    }
    case ActivationKind::Relu: {
      h = z.max(0.0);
      if (d1) *d1 = (z > 0.0).cast<double>();
      return;
    }
    case ActivationKind::Sin: {
      h = (a * z).sin();
      if (d1) *d1 = a * (a * z).cos();
      return;
    }
    case ActivationKind::ExpSin: {
      const Eigen::ArrayXXd az = a * z;
      h = az.sin().exp();
      if (d1) *d1 = a * az.cos() * h;
      return;
    }
    default: break;
  }
  h.resize(z.rows(), z.cols());
  if (d1) d1->resize(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    h(i) = act_eval(spec, z(i));
    if (d1) (*d1)(i) = act_d1(spec, z(i));
  }
}

}  // namespace coordfit
