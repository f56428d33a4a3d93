#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "coordfit/error.hpp"
#include "coordfit/network.hpp"

// Layout (one record per line, whitespace separated):
//
//   coordfit-mlp 1
//   pe none | pe <L> <base> <include_input 0|1>
//   layers <k>
//   layer <in_dim> <out_dim> <activation string | linear>
//   weight <out*in hex floats, row-major>
//   bias <out hex floats>
//   ... repeated k times
//   end

namespace coordfit {

namespace {

constexpr const char* kMagic = "coordfit-mlp";
constexpr int kVersion = 1;

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double read_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw Error(ErrorKind::Format, "checkpoint truncated");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw Error(ErrorKind::Format, "bad number '" + token + "'");
  return v;
}

void expect(std::istream& in, const std::string& keyword) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw Error(ErrorKind::Format, "checkpoint: expected '" + keyword + "', got '" + token + "'");
  }
}

}  // namespace

void save_checkpoint(const MlpParams& params, std::ostream& out) {
  params.validate();
  out << kMagic << ' ' << kVersion << '\n';
  if (params.pe) {
    out << "pe " << params.pe->num_frequencies << ' ' << hex(params.pe->base) << ' '
        << (params.pe->include_input ? 1 : 0) << '\n';
  } else {
    out << "pe none\n";
  }
  out << "layers " << params.layers.size() << '\n';
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& s = params.specs[l];
    const auto& layer = params.layers[l];
    out << "layer " << s.in_dim << ' ' << s.out_dim << ' '
        << (s.activation ? format_activation(*s.activation) : std::string("linear")) << '\n';
    out << "weight";
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out << ' ' << hex(layer.weight(r, c));
    out << "\nbias";
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << ' ' << hex(layer.bias(r));
    out << '\n';
  }
  out << "end\n";
}

MlpParams load_checkpoint(std::istream& in) {
  expect(in, kMagic);
  int version = 0;
  if (!(in >> version) || version != kVersion) {
    throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  }
  MlpParams params;
  expect(in, "pe");
  std::string token;
  in >> token;
  if (token != "none") {
    PositionalEmbeddingSpec pe;
    pe.num_frequencies = std::stoi(token);
    pe.base = read_double(in);
    int include = 0;
    in >> include;
    pe.include_input = include != 0;
    params.pe = pe;
  }
  expect(in, "layers");
  std::size_t k = 0;
  if (!(in >> k) || k == 0) throw Error(ErrorKind::Format, "checkpoint: bad layer count");
  for (std::size_t l = 0; l < k; ++l) {
    expect(in, "layer");
    LayerSpec spec;
    std::string act;
    if (!(in >> spec.in_dim >> spec.out_dim >> act)) throw Error(ErrorKind::Format, "checkpoint: bad layer header");
    if (act != "linear") spec.activation = parse_activation(act);
    Layer layer{Matrix(spec.out_dim, spec.in_dim), Vector(spec.out_dim)};
    expect(in, "weight");
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = read_double(in);
    expect(in, "bias");
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = read_double(in);
    params.specs.push_back(spec);
    params.layers.push_back(std::move(layer));
  }
  expect(in, "end");
  params.validate();
  return params;
}

void save_checkpoint(const MlpParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  save_checkpoint(params, out);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  return load_checkpoint(in);
}

}  // namespace coordfit
