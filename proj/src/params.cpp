#include "cba/params.hpp"

#include "cba/rng.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cba {

namespace {

template <typename PS, typename Fn>
void visit(PS& p, ParamGroup g, Fn&& fn) {
  if (g == ParamGroup::Theta || g == ParamGroup::All) {
    for (std::size_t k = 0; k < p.backbone.size(); ++k) {
      const std::string base = "backbone" + std::to_string(k);
      fn(base + ".W", p.backbone[k].W);
      fn(base + ".b", p.backbone[k].b);
    }
    fn("head.W", p.head.W);
    fn("head.b", p.head.b);
  }
  if (g == ParamGroup::Omega || g == ParamGroup::All) {
    fn("cba.W1", p.cba_in.W);
    fn("cba.b1", p.cba_in.b);
    fn("cba.W2", p.cba_out.W);
    fn("cba.b2", p.cba_out.b);
  }
}

}  // namespace

void for_each_param(ParamSet& p, ParamGroup g,
                    const std::function<void(const std::string&, Matrix&)>& fn) {
  visit(p, g, fn);
}

void for_each_param(const ParamSet& p, ParamGroup g,
                    const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit(p, g, fn);
}

GradMap to_gradmap(const ParamSet& p, ParamGroup g) {
  GradMap m;
  for_each_param(p, g, [&](const std::string& name, const Matrix& v) { m[name] = v; });
  return m;
}

void apply_update(ParamSet& p, ParamGroup g, const GradMap& grads, double lr) {
  for_each_param(p, g, [&](const std::string& name, Matrix& v) {
    auto it = grads.find(name);
    if (it == grads.end()) return;
    if (it->second.rows() != v.rows() || it->second.cols() != v.cols())
      throw ShapeError("apply_update: gradient shape mismatch for " + name);
    v -= lr * it->second;
  });
}

ParamSet init_params(const ModelSpec& spec) {
  if (spec.input_dim < 1 || spec.class_count < 1 || spec.cba_hidden < 1)
    throw std::invalid_argument("init_params: all dimensions must be >= 1");
  for (int w : spec.backbone_widths)
    if (w < 1) throw std::invalid_argument("init_params: backbone width must be >= 1");

  Rng rng(derive_seed(spec.seed, 0));
  auto fan_in_uniform = [&](Eigen::Index out, Eigen::Index in, Eigen::Index fan) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) m(r, c) = dist(rng);
    return m;
  };

  ParamSet p;
  int in = spec.input_dim;
  for (int width : spec.backbone_widths) {
    LayerParams layer;
    layer.W = fan_in_uniform(width, in, in);
    layer.b = fan_in_uniform(1, width, in);
    p.backbone.push_back(std::move(layer));
    in = width;
  }
  p.head.W = fan_in_uniform(spec.class_count, in, in);
  p.head.b = fan_in_uniform(1, spec.class_count, in);
  p.cba_in.W = fan_in_uniform(spec.cba_hidden, spec.class_count, spec.class_count);
  p.cba_in.b = fan_in_uniform(1, spec.cba_hidden, spec.class_count);
  p.cba_out.W = Matrix::Zero(spec.class_count, spec.cba_hidden);
  p.cba_out.b = Matrix::Zero(1, spec.class_count);
  return p;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const ParamSet& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write("CBA1", 4);
  for_each_param(p, ParamGroup::All, [&](const std::string& name, const Matrix& v) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, 2);
    write_u32(os, static_cast<std::uint32_t>(v.rows()));
    write_u32(os, static_cast<std::uint32_t>(v.cols()));
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        double d = v(r, c);
        os.write(reinterpret_cast<const char*>(&d), 8);
      }
  });
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CBA1", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);

  std::map<std::string, Matrix> tensors;
  while (true) {
    std::uint32_t name_len = read_u32(is);
    if (!is) break;
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = read_u32(is);
    if (rank != 2) throw std::runtime_error("load_checkpoint: unsupported rank");
    std::uint32_t rows = read_u32(is);
    std::uint32_t cols = read_u32(is);
    Matrix v(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double d;
        is.read(reinterpret_cast<char*>(&d), 8);
        v(r, c) = d;
      }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    tensors[name] = std::move(v);
  }

  ParamSet p;
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("load_checkpoint: missing tensor " + name);
    return it->second;
  };
  for (std::size_t k = 0;; ++k) {
    const std::string base = "backbone" + std::to_string(k);
    if (!tensors.count(base + ".W")) break;
    p.backbone.push_back({take(base + ".W"), take(base + ".b")});
  }
  p.head = {take("head.W"), take("head.b")};
  p.cba_in = {take("cba.W1"), take("cba.b1")};
  p.cba_out = {take("cba.W2"), take("cba.b2")};
  return p;
}

ModelTensors attach(Tape& tape, const ParamSet& p, bool track_theta, bool track_omega) {
  auto wrap = [&](const Matrix& v, bool tracked) {
    return tracked ? tape.leaf(v) : Tensor(v);
  };
  ModelTensors m;
  for (const LayerParams& l : p.backbone)
    m.backbone.push_back({wrap(l.W, track_theta), wrap(l.b, track_theta)});
  m.head = {wrap(p.head.W, track_theta), wrap(p.head.b, track_theta)};
  m.cba_in = {wrap(p.cba_in.W, track_omega), wrap(p.cba_in.b, track_omega)};
  m.cba_out = {wrap(p.cba_out.W, track_omega), wrap(p.cba_out.b, track_omega)};
  return m;
}

std::vector<Tensor> theta_leaves(const ModelTensors& m) {
  std::vector<Tensor> v;
  for (const TensorLayer& l : m.backbone) {
    v.push_back(l.W);
    v.push_back(l.b);
  }
  v.push_back(m.head.W);
  v.push_back(m.head.b);
  return v;
}

std::vector<Tensor> omega_leaves(const ModelTensors& m) {
  return {m.cba_in.W, m.cba_in.b, m.cba_out.W, m.cba_out.b};
}

std::vector<std::string> theta_names(const ParamSet& p) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < p.backbone.size(); ++k) {
    names.push_back("backbone" + std::to_string(k) + ".W");
    names.push_back("backbone" + std::to_string(k) + ".b");
  }
  names.push_back("head.W");
  names.push_back("head.b");
  return names;
}

std::vector<std::string> omega_names() {
  return {"cba.W1", "cba.b1", "cba.W2", "cba.b2"};
}

GradMap finite_difference_gradient(
    const std::function<double(const GradMap&)>& eval, const GradMap& params,
    double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("finite_difference_gradient: epsilon must be > 0");
  GradMap work = params;
  GradMap grads;
  for (auto& [name, m] : work) {
    Matrix g(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + epsilon;
        const double hi = eval(work);
        m(r, c) = saved - epsilon;
        const double lo = eval(work);
        m(r, c) = saved;
        if (!std::isfinite(hi) || !std::isfinite(lo))
          throw std::runtime_error(
              "finite_difference_gradient: non-finite eval at " + name + "(" +
              std::to_string(r) + "," + std::to_string(c) + ")");
        g(r, c) = (hi - lo) / (2.0 * epsilon);
      }
    grads[name] = std::move(g);
  }
  return grads;
}

}  // namespace cba
