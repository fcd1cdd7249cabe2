#pragma once

// Minimal differentiable core: flat parameter vectors split into named
// blocks, a tanh MLP with one hidden layer (or a single affine layer), its
// exact backward pass, and Adam.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scout/error.hpp"
#include "scout/text_io.hpp"

namespace scout::nn {

struct Block {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Block&) const = default;
};

struct ParamSet {
  std::vector<Block> blocks;
  std::vector<double> values;
  std::uint64_t seed = 0;

  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols) {
    blocks.push_back({std::move(name), rows, cols, values.size()});
    values.resize(values.size() + rows * cols, 0.0);
    return blocks.size() - 1;
  }

  const Block& find(const std::string& name) const {
    for (const Block& b : blocks) {
      if (b.name == name) return b;
    }
    throw InvariantError("parameter block not found: " + name);
  }

  bool has(const std::string& name) const {
    for (const Block& b : blocks) {
      if (b.name == name) return true;
    }
    return false;
  }

  std::span<double> block(const std::string& name) {
    const Block& b = find(name);
    return std::span<double>(values).subspan(b.offset, b.size());
  }
  std::span<const double> block(const std::string& name) const {
    const Block& b = find(name);
    return std::span<const double>(values).subspan(b.offset, b.size());
  }

  std::size_t size() const { return values.size(); }

  ParamSet zeros_like() const {
    ParamSet z;
    z.blocks = blocks;
    z.values.assign(values.size(), 0.0);
    z.seed = seed;
    return z;
  }

  bool same_shape(const ParamSet& o) const { return blocks == o.blocks && values.size() == o.values.size(); }

  void check_finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter value");
    }
  }

  bool operator==(const ParamSet&) const = default;
};

// Uniform in [-s, s] with s = 1/sqrt(fan_in), one block at a time.
inline void init_uniform(ParamSet& p, const std::string& name, std::size_t fan_in, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> u(-s, s);
  for (double& v : p.block(name)) v = u(rng);
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// FNV-1a over the raw bytes of the values; used to prove parameters are frozen.
inline std::uint64_t checksum(const ParamSet& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : p.values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

struct MlpShape {
  std::size_t in = 0;
  std::size_t hidden = 0;  // 0 means a single affine layer
  std::size_t out = 0;

  bool operator==(const MlpShape&) const = default;
};

inline void add_mlp_blocks(ParamSet& p, const MlpShape& s) {
  if (s.hidden == 0) {
    p.add_block("w", s.out, s.in);
    p.add_block("b", s.out, 1);
  } else {
    p.add_block("w1", s.hidden, s.in);
    p.add_block("b1", s.hidden, 1);
    p.add_block("w2", s.out, s.hidden);
    p.add_block("b2", s.out, 1);
  }
}

inline void init_mlp(ParamSet& p, const MlpShape& s, std::mt19937_64& rng) {
  if (s.hidden == 0) {
    init_uniform(p, "w", s.in, rng);
    init_uniform(p, "b", s.in, rng);
  } else {
    init_uniform(p, "w1", s.in, rng);
    init_uniform(p, "b1", s.in, rng);
    init_uniform(p, "w2", s.hidden, rng);
    init_uniform(p, "b2", s.hidden, rng);
  }
}

inline ParamSet make_mlp(const MlpShape& s, std::uint64_t seed) {
  ParamSet p;
  p.seed = seed;
  add_mlp_blocks(p, s);
  std::mt19937_64 rng(seed);
  init_mlp(p, s, rng);
  return p;
}

inline MlpShape mlp_shape(const ParamSet& p) {
  if (p.has("w")) {
    const Block& w = p.find("w");
    return {w.cols, 0, w.rows};
  }
  const Block& w1 = p.find("w1");
  const Block& w2 = p.find("w2");
  if (w2.cols != w1.rows) throw InvariantError("inconsistent MLP blocks");
  return {w1.cols, w1.rows, w2.rows};
}

struct Cache {
  std::vector<double> input;
  std::vector<double> hidden;  // tanh activations; empty for a single layer
  std::vector<double> output;
};

namespace detail {

// y = W x + b with W row-major (rows x cols).
inline void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> y) {
  const std::size_t rows = y.size();
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    // Four independent partial sums; the summation order is fixed.
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      s0 += row[c] * x[c];
      s1 += row[c + 1] * x[c + 1];
      s2 += row[c + 2] * x[c + 2];
      s3 += row[c + 3] * x[c + 3];
    }
    for (; c < cols; ++c) s0 += row[c] * x[c];
    y[r] = b[r] + ((s0 + s1) + (s2 + s3));
  }
}

// Accumulates dW += g x^T, db += g and returns W^T g.
inline std::vector<double> affine_backward(std::span<const double> w, std::span<const double> x,
                                           std::span<const double> g, std::span<double> dw, std::span<double> db) {
  const std::size_t rows = g.size();
  const std::size_t cols = x.size();
  std::vector<double> dx(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    db[r] += gr;
    double* drow = dw.data() + r * cols;
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      drow[c] += gr * x[c];
      dx[c] += gr * row[c];
    }
  }
  return dx;
}

}  // namespace detail

// output = W2 tanh(W1 x + b1) + b2, or W x + b for a single layer.
inline Cache forward(const ParamSet& p, std::span<const double> input) {
  const MlpShape s = mlp_shape(p);
  if (input.size() != s.in) throw InvariantError("input length does not match network input dimension");
  for (double x : input) {
    if (!std::isfinite(x)) throw NumericError("non-finite network input");
  }
  Cache c;
  c.input.assign(input.begin(), input.end());
  c.output.assign(s.out, 0.0);
  if (s.hidden == 0) {
    detail::affine(p.block("w"), p.block("b"), c.input, c.output);
    return c;
  }
  c.hidden.assign(s.hidden, 0.0);
  detail::affine(p.block("w1"), p.block("b1"), c.input, c.hidden);
  for (double& h : c.hidden) h = std::tanh(h);
  detail::affine(p.block("w2"), p.block("b2"), c.hidden, c.output);
  return c;
}

// Accumulates d(output . grad_output)/d(params) into `grads` and returns the
// gradient with respect to the input.
inline std::vector<double> backward_into(const ParamSet& p, const Cache& c, std::span<const double> grad_output,
                                         ParamSet& grads) {
  const MlpShape s = mlp_shape(p);
  if (grad_output.size() != s.out || c.output.size() != s.out || c.input.size() != s.in) {
    throw InvariantError("backward shape mismatch");
  }
  if (!grads.same_shape(p)) throw InvariantError("gradient buffer shape mismatch");
  if (s.hidden == 0) {
    return detail::affine_backward(p.block("w"), c.input, grad_output, grads.block("w"), grads.block("b"));
  }
  std::vector<double> dh =
      detail::affine_backward(p.block("w2"), c.hidden, grad_output, grads.block("w2"), grads.block("b2"));
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - c.hidden[i] * c.hidden[i];
  return detail::affine_backward(p.block("w1"), c.input, dh, grads.block("w1"), grads.block("b1"));
}

inline ParamSet backward(const ParamSet& p, const Cache& c, std::span<const double> grad_output) {
  ParamSet g = p.zeros_like();
  backward_into(p, c, grad_output, g);
  return g;
}

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_params(const ParamSet& p, double lr) {
    OptimizerState s;
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
    s.lr = lr;
    return s;
  }

  bool operator==(const OptimizerState&) const = default;
};

// Adam with bias correction. Rejects non-finite gradients before touching
// any state.
inline void optimizer_step(ParamSet& params, const ParamSet& grads, OptimizerState& st) {
  if (!params.same_shape(grads) || st.m.size() != params.size() || st.v.size() != params.size()) {
    throw InvariantError("optimizer shape mismatch");
  }
  for (double g : grads.values) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }
  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads.values[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params.values[i] -= st.lr * mhat / (std::sqrt(vhat) + st.epsilon);
  }
}

// checkpoint <seed> <step> <n_blocks>
// block <name> <rows> <cols>      (n_blocks lines)
// <value>                         (one per line, 17 significant digits)
inline void write_checkpoint(std::ostream& out, const ParamSet& p, std::int64_t step) {
  out << "checkpoint " << p.seed << ' ' << step << ' ' << p.blocks.size() << '\n';
  for (const Block& b : p.blocks) out << "block " << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
  for (double v : p.values) out << text::format_real(v) << '\n';
}

inline ParamSet read_checkpoint(std::istream& in, std::int64_t* step = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint is empty");
  auto head = text::tokens(line);
  if (head.size() != 4 || head[0] != "checkpoint") throw FormatError("bad checkpoint header: " + line);
  ParamSet p;
  p.seed = static_cast<std::uint64_t>(std::stoull(std::string(head[1])));
  if (step) *step = text::parse_int(head[2]);
  const auto n_blocks = text::parse_int(head[3]);
  for (long long i = 0; i < n_blocks; ++i) {
    if (!std::getline(in, line)) throw FormatError("truncated checkpoint");
    auto t = text::tokens(line);
    if (t.size() != 4 || t[0] != "block") throw FormatError("bad block line: " + line);
    p.add_block(std::string(t[1]), static_cast<std::size_t>(text::parse_int(t[2])),
                static_cast<std::size_t>(text::parse_int(t[3])));
  }
  for (double& v : p.values) {
    if (!std::getline(in, line)) throw FormatError("truncated checkpoint values");
    v = text::parse_real(text::trim(line));
  }
  return p;
}

inline void save_checkpoint(const std::string& path, const ParamSet& p, std::int64_t step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot open for writing: " + path);
  write_checkpoint(out, p, step);
}

inline ParamSet load_checkpoint(const std::string& path, std::int64_t* step = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("checkpoint not found: " + path);
  return read_checkpoint(in, step);
}

}  // namespace scout::nn
