#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oldpf::ad {

using Mat = Eigen::MatrixXd;

/// Named collection of learnable arrays with paired gradient slots.
class ParameterStore {
 public:
  Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Mat& create(const std::string& name, const Mat& init);

  bool has(const std::string& name) const { return values_.count(name) > 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);
  const Mat& grad(const std::string& name) const;

  void zero_grads();
  std::vector<std::string> names() const;
  std::size_t size() const { return values_.size(); }
  Eigen::Index num_scalars() const;

  bool grads_finite() const;

  /// Binary checkpoint; round-trips bit-exactly.
  void save(const std::string& path) const;
  static ParameterStore load(const std::string& path);

 private:
  // std::map keeps iteration order deterministic across runs.
  std::map<std::string, Mat> values_;
  std::map<std::string, Mat> grads_;
};

enum class Op : std::uint8_t {
  Constant,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Tanh,
  Exp,
  Log,
  Clamp,
  Sum,
  RowSum,
  ColSum,
  LogSumExp,
  GatherRows,
  SqErr,
  GaussianLogPdf,
  HStack,
  SliceCols,
  TileRows,
};

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Dynamic computation graph. Nodes are appended in topological order; one
/// tape owns one graph and is discarded (or cleared) after backward.
class Tape {
 public:
  Var constant(Mat v);
  Var constant_scalar(double v);
  /// Leaf bound to a store entry; backward accumulates into store.grad(name).
  /// Repeated binds of the same entry on one tape share a node.
  Var param(ParameterStore& store, const std::string& name);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var clamp(Var a, double lo, double hi);
  Var neg(Var a);
  Var scale(Var a, double s);
  Var add_const(Var a, double s);

  Var sum(Var a);         // 1x1, over all entries
  Var row_sum(Var a);     // Nx1
  Var col_sum(Var a);     // 1xK
  Var logsumexp(Var a);   // 1x1, over all entries

  Var gather_rows(Var a, std::vector<int> idx);
  Var sq_err(Var a, Var b);  // 1x1 sum of squared differences
  /// Row-wise diagonal-Gaussian log density; mean/log_std broadcast from 1xD.
  Var gaussian_logpdf(Var x, Var mean, Var log_std);

  Var hstack(Var a, Var b);
  Var slice_cols(Var a, int begin, int len);
  Var tile_rows(Var a, int n);

  const Mat& value(Var v) const;
  const Mat& adjoint(Var v) const;
  double scalar(Var v) const;

  /// Reverse sweep from a 1x1 root; fills adjoints and accumulates parameter
  /// gradients into their bound stores.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    Mat value;
    Mat adjoint;
    // op-specific payload
    std::vector<int> indices;
    int i0 = 0, i1 = 0;
    double lo = 0.0, hi = 0.0;
    ParameterStore* store = nullptr;
    std::string name;
  };

  int push(Node n);
  Var binary(Op op, Var a, Var b);
  const Node& node(Var v) const;

  static void check_same_or_broadcast(const Mat& a, const Mat& b, const char* what);
  static Mat broadcast_to(const Mat& m, Eigen::Index rows, Eigen::Index cols);
  static Mat reduce_to(const Mat& full, Eigen::Index rows, Eigen::Index cols);

  std::vector<Node> nodes_;
  std::map<std::pair<const void*, std::string>, int> param_cache_;
};

/// Feed-forward network: tanh hidden layers, identity output. Parameters live
/// in a ParameterStore under `prefix` (W0, b0, W1, b1, ...).
class Mlp {
 public:
  Mlp() = default;
  /// Creates parameters: W uniform in +-sqrt(6/(fan_in+fan_out)), b zero.
  Mlp(ParameterStore& store, std::string prefix, std::vector<int> widths,
      std::mt19937_64& rng);

  Var forward(Tape& tape, ParameterStore& store, Var input) const;

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<std::string>& param_names() const { return names_; }

 private:
  std::string prefix_;
  std::vector<int> widths_;
  std::vector<std::string> names_;
};

}  // namespace oldpf::ad
