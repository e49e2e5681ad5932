#include "oldpf/autodiff.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace oldpf::ad {

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* what, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string("shape mismatch in ") + what + ": " +
                              shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterStore

Mat& ParameterStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return create(name, Mat::Zero(rows, cols));
}

Mat& ParameterStore::create(const std::string& name, const Mat& init) {
  if (has(name)) throw std::invalid_argument("parameter already exists: " + name);
  values_[name] = init;
  grads_[name] = Mat::Zero(init.rows(), init.cols());
  return values_[name];
}

Mat& ParameterStore::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second;
}

const Mat& ParameterStore::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second;
}

Mat& ParameterStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second;
}

const Mat& ParameterStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, g] : grads_) g.setZero();
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [name, v] : values_) out.push_back(name);
  return out;
}

Eigen::Index ParameterStore::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& [name, v] : values_) n += v.size();
  return n;
}

bool ParameterStore::grads_finite() const {
  for (const auto& [name, g] : grads_)
    if (!g.allFinite()) return false;
  return true;
}

namespace {
constexpr std::uint32_t kCkptMagic = 0x4F4C5046;  // "OLPF"
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void ParameterStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  write_pod(os, kCkptMagic);
  write_pod(os, kCkptVersion);
  write_pod(os, static_cast<std::uint64_t>(values_.size()));
  for (const auto& [name, v] : values_) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint64_t>(v.rows()));
    write_pod(os, static_cast<std::uint64_t>(v.cols()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sizeof(double) * v.size()));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

ParameterStore ParameterStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  if (read_pod<std::uint32_t>(is) != kCkptMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(is) != kCkptVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  ParameterStore store;
  const auto n = read_pod<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < n; ++k) {
    const auto len = read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = static_cast<Eigen::Index>(read_pod<std::uint64_t>(is));
    const auto cols = static_cast<Eigen::Index>(read_pod<std::uint64_t>(is));
    Mat v(rows, cols);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
    store.create(name, v);
  }
  return store;
}

// ---------------------------------------------------------------------------
// Tape

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::out_of_range("invalid Var handle");
  return nodes_[static_cast<std::size_t>(v.idx)];
}

const Mat& Tape::value(Var v) const { return node(v).value; }
const Mat& Tape::adjoint(Var v) const { return node(v).adjoint; }

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw std::invalid_argument("scalar() on non-1x1 value " + shape_str(m));
  return m(0, 0);
}

Var Tape::constant(Mat v) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(v);
  return Var{push(std::move(n))};
}

Var Tape::constant_scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(ParameterStore& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const void*>(&store), name);
  auto it = param_cache_.find(key);
  if (it != param_cache_.end()) return Var{it->second};
  Node n;
  n.op = Op::Param;
  n.value = store.value(name);
  n.store = &store;
  n.name = name;
  int idx = push(std::move(n));
  param_cache_[key] = idx;
  return Var{idx};
}

void Tape::check_same_or_broadcast(const Mat& a, const Mat& b, const char* what) {
  const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
  const bool cols_ok = a.cols() == b.cols() || a.cols() == 1 || b.cols() == 1;
  if (!rows_ok || !cols_ok) shape_error(what, a, b);
}

Mat Tape::broadcast_to(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

Mat Tape::reduce_to(const Mat& full, Eigen::Index rows, Eigen::Index cols) {
  Mat out = full;
  if (rows == 1 && out.rows() > 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() > 1) out = out.rowwise().sum().eval();
  return out;
}

Var Tape::binary(Op op, Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  const char* what = op == Op::Add   ? "add"
                     : op == Op::Sub ? "sub"
                     : op == Op::Mul ? "mul"
                                     : "div";
  check_same_or_broadcast(va, vb, what);
  const Eigen::Index rows = std::max(va.rows(), vb.rows());
  const Eigen::Index cols = std::max(va.cols(), vb.cols());
  Mat fa = broadcast_to(va, rows, cols);
  Mat fb = broadcast_to(vb, rows, cols);
  Node n;
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  switch (op) {
    case Op::Add: n.value = fa + fb; break;
    case Op::Sub: n.value = fa - fb; break;
    case Op::Mul: n.value = fa.cwiseProduct(fb); break;
    case Op::Div: n.value = fa.cwiseQuotient(fb); break;
    default: throw std::logic_error("binary: bad op");
  }
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }

Var Tape::matmul(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  Node n;
  n.op = Op::MatMul;
  n.a = a.idx;
  n.b = b.idx;
  n.value = va * vb;
  return Var{push(std::move(n))};
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.idx;
  n.value = value(a).array().tanh().matrix();
  return Var{push(std::move(n))};
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::Exp;
  n.a = a.idx;
  n.value = value(a).array().exp().matrix();
  return Var{push(std::move(n))};
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.a = a.idx;
  n.value = value(a).array().log().matrix();
  return Var{push(std::move(n))};
}

Var Tape::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = a.idx;
  n.lo = lo;
  n.hi = hi;
  n.value = value(a).array().max(lo).min(hi).matrix();
  return Var{push(std::move(n))};
}

Var Tape::neg(Var a) { return scale(a, -1.0); }
Var Tape::scale(Var a, double s) { return mul(a, constant_scalar(s)); }
Var Tape::add_const(Var a, double s) { return add(a, constant_scalar(s)); }

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.idx;
  n.value = Mat::Constant(1, 1, value(a).sum());
  return Var{push(std::move(n))};
}

Var Tape::row_sum(Var a) {
  Node n;
  n.op = Op::RowSum;
  n.a = a.idx;
  n.value = value(a).rowwise().sum();
  return Var{push(std::move(n))};
}

Var Tape::col_sum(Var a) {
  Node n;
  n.op = Op::ColSum;
  n.a = a.idx;
  n.value = value(a).colwise().sum();
  return Var{push(std::move(n))};
}

Var Tape::logsumexp(Var a) {
  const Mat& v = value(a);
  const double m = v.maxCoeff();
  double lse;
  if (!std::isfinite(m)) {
    // all -inf (empty support) stays -inf; +inf propagates
    lse = m;
  } else {
    lse = m + std::log((v.array() - m).exp().sum());
  }
  Node n;
  n.op = Op::LogSumExp;
  n.a = a.idx;
  n.value = Mat::Constant(1, 1, lse);
  return Var{push(std::move(n))};
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Mat& v = value(a);
  Mat out(static_cast<Eigen::Index>(idx.size()), v.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= v.rows())
      throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = v.row(idx[i]);
  }
  Node n;
  n.op = Op::GatherRows;
  n.a = a.idx;
  n.indices = std::move(idx);
  n.value = std::move(out);
  return Var{push(std::move(n))};
}

Var Tape::sq_err(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("sq_err", va, vb);
  Node n;
  n.op = Op::SqErr;
  n.a = a.idx;
  n.b = b.idx;
  n.value = Mat::Constant(1, 1, (va - vb).squaredNorm());
  return Var{push(std::move(n))};
}

Var Tape::gaussian_logpdf(Var x, Var mean, Var log_std) {
  const Mat& vx = value(x);
  const Mat& vm = value(mean);
  const Mat& vs = value(log_std);
  check_same_or_broadcast(vx, vm, "gaussian_logpdf(x,mean)");
  check_same_or_broadcast(vx, vs, "gaussian_logpdf(x,log_std)");
  if (vm.cols() != vx.cols() || vs.cols() != vx.cols())
    shape_error("gaussian_logpdf", vx, vm.cols() != vx.cols() ? vm : vs);
  const Eigen::Index rows = vx.rows();
  const Eigen::Index cols = vx.cols();
  Mat fm = broadcast_to(vm, rows, cols);
  Mat fs = broadcast_to(vs, rows, cols);
  Mat z = (vx - fm).cwiseQuotient(fs.array().exp().matrix());
  Mat out(rows, 1);
  const double c = -0.5 * std::log(2.0 * M_PI) * static_cast<double>(cols);
  out = Mat::Constant(rows, 1, c) - fs.rowwise().sum() -
        0.5 * z.array().square().matrix().rowwise().sum();
  Node n;
  n.op = Op::GaussianLogPdf;
  n.a = x.idx;
  n.b = mean.idx;
  n.c = log_std.idx;
  n.value = std::move(out);
  return Var{push(std::move(n))};
}

Var Tape::hstack(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.rows() != vb.rows()) shape_error("hstack", va, vb);
  Mat out(va.rows(), va.cols() + vb.cols());
  out << va, vb;
  Node n;
  n.op = Op::HStack;
  n.a = a.idx;
  n.b = b.idx;
  n.i0 = static_cast<int>(va.cols());
  n.value = std::move(out);
  return Var{push(std::move(n))};
}

Var Tape::slice_cols(Var a, int begin, int len) {
  const Mat& v = value(a);
  if (begin < 0 || len < 0 || begin + len > v.cols())
    throw std::out_of_range("slice_cols: [" + std::to_string(begin) + "," +
                            std::to_string(begin + len) + ") out of " +
                            std::to_string(v.cols()) + " cols");
  Node n;
  n.op = Op::SliceCols;
  n.a = a.idx;
  n.i0 = begin;
  n.i1 = len;
  n.value = v.middleCols(begin, len);
  return Var{push(std::move(n))};
}

Var Tape::tile_rows(Var a, int nrep) {
  const Mat& v = value(a);
  if (v.rows() != 1) throw std::invalid_argument("tile_rows: input must have 1 row");
  Node n;
  n.op = Op::TileRows;
  n.a = a.idx;
  n.i0 = nrep;
  n.value = v.replicate(nrep, 1);
  return Var{push(std::move(n))};
}

void Tape::backward(Var root, double seed) {
  Node& r = nodes_.at(static_cast<std::size_t>(root.idx));
  if (r.value.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(r.value));
  for (auto& n : nodes_) n.adjoint = Mat::Zero(n.value.rows(), n.value.cols());
  r.adjoint(0, 0) = seed;

  auto acc = [&](int idx, const Mat& contrib) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    n.adjoint += reduce_to(contrib, n.value.rows(), n.value.cols());
  };

  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.adjoint.size() == 0 || n.adjoint.isZero(0.0)) continue;
    const Mat& g = n.adjoint;
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Param:
        n.store->grad(n.name) += g;
        break;
      case Op::Add:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case Op::Sub:
        acc(n.a, g);
        acc(n.b, -g);
        break;
      case Op::Mul: {
        const Mat fb = broadcast_to(nodes_[n.b].value, g.rows(), g.cols());
        const Mat fa = broadcast_to(nodes_[n.a].value, g.rows(), g.cols());
        acc(n.a, g.cwiseProduct(fb));
        acc(n.b, g.cwiseProduct(fa));
        break;
      }
      case Op::Div: {
        const Mat fb = broadcast_to(nodes_[n.b].value, g.rows(), g.cols());
        const Mat fa = broadcast_to(nodes_[n.a].value, g.rows(), g.cols());
        acc(n.a, g.cwiseQuotient(fb));
        acc(n.b, -g.cwiseProduct(fa).cwiseQuotient(fb.cwiseProduct(fb)));
        break;
      }
      case Op::MatMul:
        acc(n.a, g * nodes_[n.b].value.transpose());
        acc(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::Tanh:
        acc(n.a, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Exp:
        acc(n.a, g.cwiseProduct(n.value));
        break;
      case Op::Log:
        acc(n.a, g.cwiseQuotient(nodes_[n.a].value));
        break;
      case Op::Clamp: {
        const Mat& x = nodes_[n.a].value;
        Mat mask = ((x.array() >= n.lo) && (x.array() <= n.hi)).cast<double>();
        acc(n.a, g.cwiseProduct(mask));
        break;
      }
      case Op::Sum:
        acc(n.a, Mat::Constant(nodes_[n.a].value.rows(), nodes_[n.a].value.cols(), g(0, 0)));
        break;
      case Op::RowSum:
        acc(n.a, g.replicate(1, nodes_[n.a].value.cols()));
        break;
      case Op::ColSum:
        acc(n.a, g.replicate(nodes_[n.a].value.rows(), 1));
        break;
      case Op::LogSumExp: {
        const Mat& x = nodes_[n.a].value;
        const double lse = n.value(0, 0);
        Mat soft = (x.array() - lse).exp();
        acc(n.a, g(0, 0) * soft.matrix());
        break;
      }
      case Op::GatherRows: {
        Mat contrib = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (std::size_t k = 0; k < n.indices.size(); ++k)
          contrib.row(n.indices[k]) += g.row(static_cast<Eigen::Index>(k));
        acc(n.a, contrib);
        break;
      }
      case Op::SqErr: {
        Mat diff = nodes_[n.a].value - nodes_[n.b].value;
        acc(n.a, 2.0 * g(0, 0) * diff);
        acc(n.b, -2.0 * g(0, 0) * diff);
        break;
      }
      case Op::GaussianLogPdf: {
        const Mat& x = nodes_[n.a].value;
        const Mat fm = broadcast_to(nodes_[n.b].value, x.rows(), x.cols());
        const Mat fs = broadcast_to(nodes_[n.c].value, x.rows(), x.cols());
        Mat inv_var = (-2.0 * fs.array()).exp();
        Mat diff = x - fm;
        Mat gx = -diff.cwiseProduct(inv_var);
        Mat grow = g.replicate(1, x.cols());
        acc(n.a, grow.cwiseProduct(gx));
        acc(n.b, -grow.cwiseProduct(gx));
        Mat gls = diff.array().square().matrix().cwiseProduct(inv_var);
        gls.array() -= 1.0;
        acc(n.c, grow.cwiseProduct(gls));
        break;
      }
      case Op::HStack:
        acc(n.a, g.leftCols(n.i0));
        acc(n.b, g.rightCols(g.cols() - n.i0));
        break;
      case Op::SliceCols: {
        Mat contrib = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        contrib.middleCols(n.i0, n.i1) = g;
        acc(n.a, contrib);
        break;
      }
      case Op::TileRows:
        acc(n.a, g.colwise().sum());
        break;
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  param_cache_.clear();
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(ParameterStore& store, std::string prefix, std::vector<int> widths,
         std::mt19937_64& rng)
    : prefix_(std::move(prefix)), widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least 2 widths");
  for (int w : widths_)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int fan_in = widths_[l];
    const int fan_out = widths_[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * unif(rng);
    const std::string wn = prefix_ + "W" + std::to_string(l);
    const std::string bn = prefix_ + "b" + std::to_string(l);
    store.create(wn, w);
    store.create(bn, Mat::Zero(1, fan_out));
    names_.push_back(wn);
    names_.push_back(bn);
  }
}

Var Mlp::forward(Tape& tape, ParameterStore& store, Var input) const {
  const Mat& in = tape.value(input);
  if (in.cols() != widths_.front())
    throw std::invalid_argument("Mlp: input width " + std::to_string(in.cols()) +
                                " does not match declared " + std::to_string(widths_.front()));
  Var h = input;
  const std::size_t n_layers = widths_.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Var w = tape.param(store, prefix_ + "W" + std::to_string(l));
    Var b = tape.param(store, prefix_ + "b" + std::to_string(l));
    h = tape.add(tape.matmul(h, w), b);
    if (l + 1 < n_layers) h = tape.tanh(h);
  }
  return h;
}

}  // namespace oldpf::ad
