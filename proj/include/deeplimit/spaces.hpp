#pragma once

// Parameter spaces for layer-indexed network coefficients and their
// continuum counterparts.
//
// Conventions used throughout:
//  * A depth-n layer grid has nodes t_i = i/n for i = 0..n-1.
//  * The step extension of nodal values assigns the value at t_i to the
//    cell [i/n, (i+1)/n), left-closed; the right endpoint t = 1 maps to
//    the last cell.  The choice of cell boundary side is invisible to
//    every L2 quantity below.
//  * Continuum paths are piecewise linear on N uniformly spaced nodes
//    j/(N-1), j = 0..N-1, covering [0,1] inclusive.
//  * Matrix-valued gaps are measured in the Frobenius norm, vector-valued
//    ones in the Euclidean norm.
//
// All integrals of piecewise polynomials are evaluated segment-exactly
// (no sampling-based quadrature).

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeplimit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double frob_inner(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b).sum();
}

// Uniform layer grid with nodes i/n, i = 0..n-1.
struct Grid {
  int n = 1;

  Grid() = default;
  explicit Grid(int layers) : n(layers) {
    if (layers < 1) throw std::invalid_argument("Grid: n must be >= 1");
  }

  double node(int i) const { return static_cast<double>(i) / n; }
  double spacing() const { return 1.0 / n; }
};

// Nodal values of a layer-indexed coefficient.  Matrix flavor stores d x d
// blocks, vector flavor d x 1; a block per grid node.
struct DiscreteParamPath {
  Grid grid;
  std::vector<Matrix> values;

  DiscreteParamPath() = default;
  DiscreteParamPath(Grid g, std::vector<Matrix> vals)
      : grid(g), values(std::move(vals)) {
    if (static_cast<int>(values.size()) != grid.n)
      throw std::invalid_argument("DiscreteParamPath: value count != n");
    for (const auto& v : values)
      if (v.rows() != values[0].rows() || v.cols() != values[0].cols())
        throw std::invalid_argument("DiscreteParamPath: ragged value shapes");
  }

  static DiscreteParamPath constant(int n, const Matrix& v) {
    return DiscreteParamPath(Grid(n), std::vector<Matrix>(n, v));
  }

  static DiscreteParamPath zeros(int n, int rows, int cols) {
    return constant(n, Matrix::Zero(rows, cols));
  }

  int n() const { return grid.n; }
  int rows() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
  int cols() const { return values.empty() ? 0 : static_cast<int>(values[0].cols()); }
  bool isMatrixFlavor() const { return rows() == cols(); }
  bool isVectorFlavor() const { return cols() == 1; }

  bool sameShape(const DiscreteParamPath& o) const {
    return n() == o.n() && rows() == o.rows() && cols() == o.cols();
  }
};

// Piecewise-linear path on N >= 2 nodes j/(N-1).
struct ContinuumParamPath {
  std::vector<Matrix> values;

  ContinuumParamPath() = default;
  explicit ContinuumParamPath(std::vector<Matrix> vals) : values(std::move(vals)) {
    if (values.size() < 2)
      throw std::invalid_argument("ContinuumParamPath: need at least 2 nodes");
    for (const auto& v : values)
      if (v.rows() != values[0].rows() || v.cols() != values[0].cols())
        throw std::invalid_argument("ContinuumParamPath: ragged value shapes");
  }

  // Samples a scalar function elementwise onto N nodes; fn maps t to a block.
  template <class Fn>
  static ContinuumParamPath sample(int nodes, Fn&& fn) {
    if (nodes < 2) throw std::invalid_argument("sample: need at least 2 nodes");
    std::vector<Matrix> vals;
    vals.reserve(nodes);
    for (int j = 0; j < nodes; ++j)
      vals.push_back(fn(static_cast<double>(j) / (nodes - 1)));
    return ContinuumParamPath(std::move(vals));
  }

  static ContinuumParamPath constant(int nodes, const Matrix& v) {
    return ContinuumParamPath(std::vector<Matrix>(nodes, v));
  }

  static ContinuumParamPath zeros(int nodes, int rows, int cols) {
    return constant(nodes, Matrix::Zero(rows, cols));
  }

  int nodeCount() const { return static_cast<int>(values.size()); }
  int segments() const { return nodeCount() - 1; }
  double spacing() const { return 1.0 / segments(); }
  double node(int j) const { return static_cast<double>(j) / segments(); }
  int rows() const { return static_cast<int>(values[0].rows()); }
  int cols() const { return static_cast<int>(values[0].cols()); }
  bool isMatrixFlavor() const { return rows() == cols(); }
  bool isVectorFlavor() const { return cols() == 1; }

  bool sameShape(const ContinuumParamPath& o) const {
    return nodeCount() == o.nodeCount() && rows() == o.rows() && cols() == o.cols();
  }

  // Linear interpolation; t is clamped to [0,1].
  Matrix eval(double t) const {
    const int segs = segments();
    double x = t * segs;
    if (x <= 0.0) return values.front();
    if (x >= segs) return values.back();
    int u = static_cast<int>(std::floor(x));
    if (u >= segs) u = segs - 1;
    const double s = x - u;
    return values[u] + s * (values[u + 1] - values[u]);
  }

  // Constant derivative on segment u.
  Matrix derivOnSegment(int u) const {
    return (values[u + 1] - values[u]) * static_cast<double>(segments());
  }

  // Largest Frobenius norm of a segment slope (a Lipschitz constant).
  double maxSlope() const {
    double m = 0.0;
    for (int u = 0; u < segments(); ++u) m = std::max(m, derivOnSegment(u).norm());
    return m;
  }

  double maxNodeNorm() const {
    double m = 0.0;
    for (const auto& v : values) m = std::max(m, v.norm());
    return m;
  }
};

// Exact step-function extension of a DiscreteParamPath.  Value v_i covers
// the cell [i/n, (i+1)/n); kept in nodal form so integrals against it stay
// closed-form per cell.
struct StepFunction {
  Grid grid;
  std::vector<Matrix> values;

  int n() const { return grid.n; }
  int rows() const { return static_cast<int>(values[0].rows()); }
  int cols() const { return static_cast<int>(values[0].cols()); }

  int cellOf(double t) const {
    int i = static_cast<int>(std::floor(t * grid.n));
    if (i < 0) i = 0;
    if (i >= grid.n) i = grid.n - 1;
    return i;
  }

  const Matrix& cellValue(int i) const { return values[i]; }
  const Matrix& value_at(double t) const { return values[cellOf(t)]; }

  // Elementwise integral over [0,1]; each cell has measure 1/n.
  Matrix integral() const {
    Matrix acc = Matrix::Zero(values[0].rows(), values[0].cols());
    for (const auto& v : values) acc += v;
    return acc / grid.n;
  }
};

inline StepFunction extend_piecewise_constant(const DiscreteParamPath& p) {
  if (p.values.empty()) throw std::invalid_argument("extend: empty path");
  return StepFunction{p.grid, p.values};
}

namespace detail {

// Integral of || A + s*(B - A) ||_F^2 ds over s in [0,1], scaled by len:
// the exact L2 mass of a linear segment with endpoint values A, B.
inline double linear_segment_l2sq(const Matrix& a, const Matrix& b, double len) {
  return len * (a.squaredNorm() + frob_inner(a, b) + b.squaredNorm()) / 3.0;
}

inline void check_same_block_shape(const char* who, int r1, int c1, int r2, int c2) {
  if (r1 != r2 || c1 != c2)
    throw std::invalid_argument(std::string(who) + ": block shape mismatch (" +
                                std::to_string(r1) + "x" + std::to_string(c1) + " vs " +
                                std::to_string(r2) + "x" + std::to_string(c2) + ")");
}

}  // namespace detail

// Squared L2 gap between a step extension and a piecewise-linear path,
// evaluated exactly on the union of both breakpoint sets.
inline double l2_gap_squared(const DiscreteParamPath& p, const ContinuumParamPath& f) {
  detail::check_same_block_shape("l2_gap", p.rows(), p.cols(), f.rows(), f.cols());
  const int n = p.n();
  const int segs = f.segments();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    const Matrix& v = p.values[i];
    // pwl segments overlapping [lo, hi]
    int u0 = static_cast<int>(std::floor(lo * segs));
    if (u0 >= segs) u0 = segs - 1;
    for (int u = u0; u < segs; ++u) {
      const double slo = static_cast<double>(u) / segs;
      const double shi = static_cast<double>(u + 1) / segs;
      if (slo >= hi) break;
      const double a = std::max(lo, slo);
      const double b = std::min(hi, shi);
      if (b <= a) continue;
      const Matrix fa = f.eval(a) - v;
      const Matrix fb = f.eval(b) - v;
      acc += detail::linear_segment_l2sq(fa, fb, b - a);
    }
  }
  return acc;
}

// L2 distance between two piecewise-linear paths (exact, merged meshes).
inline double l2_distance_pwl(const ContinuumParamPath& f, const ContinuumParamPath& g) {
  detail::check_same_block_shape("l2_distance_pwl", f.rows(), f.cols(), g.rows(), g.cols());
  const long sf = f.segments(), sg = g.segments();
  double acc = 0.0;
  long uf = 0, ug = 0;
  double t = 0.0;
  while (t < 1.0) {
    const double nf = static_cast<double>(uf + 1) / sf;
    const double ng = static_cast<double>(ug + 1) / sg;
    const double next = std::min(1.0, std::min(nf, ng));
    const Matrix da = f.eval(t) - g.eval(t);
    const Matrix db = f.eval(next) - g.eval(next);
    acc += detail::linear_segment_l2sq(da, db, next - t);
    if (nf <= next + 1e-15 && uf + 1 < sf) ++uf;
    if (ng <= next + 1e-15 && ug + 1 < sg) ++ug;
    if (next <= t) break;
    t = next;
  }
  return std::sqrt(acc);
}

// d1: L2 gap between the step extension of a matrix path and a
// piecewise-linear matrix path.
inline double d1_distance(const DiscreteParamPath& p, const ContinuumParamPath& f) {
  if (!p.isMatrixFlavor() || !f.isMatrixFlavor())
    throw std::invalid_argument("d1_distance: matrix flavor required");
  return std::sqrt(l2_gap_squared(p, f));
}

// d2: the vector-flavor counterpart of d1.
inline double d2_distance(const DiscreteParamPath& p, const ContinuumParamPath& f) {
  if (!p.isVectorFlavor() || !f.isVectorFlavor())
    throw std::invalid_argument("d2_distance: vector flavor required");
  return std::sqrt(l2_gap_squared(p, f));
}

// Full parameter set at depth n: layer paths K (d x d) and b (d), plus the
// readout pair W (m x d), c (m).
struct DiscreteParams {
  DiscreteParamPath K;
  DiscreteParamPath b;
  Matrix W;
  Vector c;

  int n() const { return K.n(); }
  int d() const { return K.rows(); }
  int m() const { return static_cast<int>(W.rows()); }

  void validate() const {
    if (!K.isMatrixFlavor()) throw std::invalid_argument("params: K must be square blocks");
    if (!b.isVectorFlavor() || b.rows() != K.rows())
      throw std::invalid_argument("params: b must be d-vectors");
    if (b.n() != K.n()) throw std::invalid_argument("params: K and b depth mismatch");
    if (W.cols() != K.rows()) throw std::invalid_argument("params: W must be m x d");
    if (c.size() != W.rows()) throw std::invalid_argument("params: c must be m-vector");
  }

  static DiscreteParams zeros(int n, int d, int m) {
    return DiscreteParams{DiscreteParamPath::zeros(n, d, d),
                          DiscreteParamPath::zeros(n, d, 1),
                          Matrix::Zero(m, d), Vector::Zero(m)};
  }
};

// Continuum parameter set: piecewise-linear K, b plus the readout pair.
struct ContinuumParams {
  ContinuumParamPath K;
  ContinuumParamPath b;
  Matrix W;
  Vector c;

  int nodeCount() const { return K.nodeCount(); }
  int d() const { return K.rows(); }
  int m() const { return static_cast<int>(W.rows()); }

  void validate() const {
    if (!K.isMatrixFlavor()) throw std::invalid_argument("params: K must be square blocks");
    if (!b.isVectorFlavor() || b.rows() != K.rows())
      throw std::invalid_argument("params: b must be d-vectors");
    if (b.nodeCount() != K.nodeCount())
      throw std::invalid_argument("params: K and b node count mismatch");
    if (W.cols() != K.rows()) throw std::invalid_argument("params: W must be m x d");
    if (c.size() != W.rows()) throw std::invalid_argument("params: c must be m-vector");
  }

  static ContinuumParams zeros(int nodes, int d, int m) {
    return ContinuumParams{ContinuumParamPath::zeros(nodes, d, d),
                           ContinuumParamPath::zeros(nodes, d, 1),
                           Matrix::Zero(m, d), Vector::Zero(m)};
  }
};

// base + r * dir, componentwise over all four blocks.
inline DiscreteParams axpy(const DiscreteParams& base, double r, const DiscreteParams& dir) {
  DiscreteParams out = base;
  for (int i = 0; i < base.n(); ++i) {
    out.K.values[i] += r * dir.K.values[i];
    out.b.values[i] += r * dir.b.values[i];
  }
  out.W += r * dir.W;
  out.c += r * dir.c;
  return out;
}

inline ContinuumParams axpy(const ContinuumParams& base, double r, const ContinuumParams& dir) {
  ContinuumParams out = base;
  for (int j = 0; j < base.nodeCount(); ++j) {
    out.K.values[j] += r * dir.K.values[j];
    out.b.values[j] += r * dir.b.values[j];
  }
  out.W += r * dir.W;
  out.c += r * dir.c;
  return out;
}

// Full inner product over all parameter blocks.
inline double dot(const DiscreteParams& a, const DiscreteParams& b) {
  double acc = 0.0;
  for (int i = 0; i < a.n(); ++i) {
    acc += frob_inner(a.K.values[i], b.K.values[i]);
    acc += frob_inner(a.b.values[i], b.b.values[i]);
  }
  acc += frob_inner(a.W, b.W);
  acc += a.c.dot(b.c);
  return acc;
}

inline double dot(const ContinuumParams& a, const ContinuumParams& b) {
  double acc = 0.0;
  for (int j = 0; j < a.nodeCount(); ++j) {
    acc += frob_inner(a.K.values[j], b.K.values[j]);
    acc += frob_inner(a.b.values[j], b.b.values[j]);
  }
  acc += frob_inner(a.W, b.W);
  acc += a.c.dot(b.c);
  return acc;
}

// Flat coordinate layout, shared by both flavors:
// [K blocks, row-major, node order][b blocks][W row-major][c].
namespace detail {

inline int flat_block_copy_out(const Matrix& M, Vector& v, int at) {
  for (int r = 0; r < M.rows(); ++r)
    for (int cc = 0; cc < M.cols(); ++cc) v(at++) = M(r, cc);
  return at;
}

inline int flat_block_copy_in(Matrix& M, const Vector& v, int at) {
  for (int r = 0; r < M.rows(); ++r)
    for (int cc = 0; cc < M.cols(); ++cc) M(r, cc) = v(at++);
  return at;
}

template <class Params>
int flat_size_of(const Params& p, int blocks) {
  const int d = p.d();
  return blocks * (d * d + d) + static_cast<int>(p.W.size() + p.c.size());
}

template <class Params>
Vector flatten_impl(const Params& p, int blocks) {
  Vector v(flat_size_of(p, blocks));
  int at = 0;
  for (int i = 0; i < blocks; ++i) at = flat_block_copy_out(p.K.values[i], v, at);
  for (int i = 0; i < blocks; ++i) at = flat_block_copy_out(p.b.values[i], v, at);
  at = flat_block_copy_out(p.W, v, at);
  for (int r = 0; r < p.c.size(); ++r) v(at++) = p.c(r);
  return v;
}

template <class Params>
Params unflatten_impl(const Params& like, int blocks, const Vector& v) {
  if (v.size() != flat_size_of(like, blocks))
    throw std::invalid_argument("unflatten: coordinate count mismatch");
  Params out = like;
  int at = 0;
  for (int i = 0; i < blocks; ++i) at = flat_block_copy_in(out.K.values[i], v, at);
  for (int i = 0; i < blocks; ++i) at = flat_block_copy_in(out.b.values[i], v, at);
  at = flat_block_copy_in(out.W, v, at);
  for (int r = 0; r < out.c.size(); ++r) out.c(r) = v(at++);
  return out;
}

}  // namespace detail

inline int flat_size(const DiscreteParams& p) { return detail::flat_size_of(p, p.n()); }
inline int flat_size(const ContinuumParams& p) {
  return detail::flat_size_of(p, p.nodeCount());
}
inline Vector flatten(const DiscreteParams& p) { return detail::flatten_impl(p, p.n()); }
inline Vector flatten(const ContinuumParams& p) {
  return detail::flatten_impl(p, p.nodeCount());
}
inline DiscreteParams unflatten_like(const DiscreteParams& like, const Vector& v) {
  return detail::unflatten_impl(like, like.n(), v);
}
inline ContinuumParams unflatten_like(const ContinuumParams& like, const Vector& v) {
  return detail::unflatten_impl(like, like.nodeCount(), v);
}

// Distance between a depth-n parameter set and a continuum one:
//   d1(K) + d2(b) + Frobenius gap of W + Euclidean gap of c.
inline double param_distance(const DiscreteParams& dn, const ContinuumParams& ct) {
  dn.validate();
  ct.validate();
  if (dn.d() != ct.d() || dn.m() != ct.m())
    throw std::invalid_argument("param_distance: dimension mismatch");
  return d1_distance(dn.K, ct.K) + d2_distance(dn.b, ct.b) +
         (dn.W - ct.W).norm() + (dn.c - ct.c).norm();
}

// Cell averages of a piecewise-linear path on the depth-n grid:
//   value_i = n * integral of f over [i/n, (i+1)/n], evaluated exactly.
inline DiscreteParamPath restrict_cell_average(const ContinuumParamPath& f, int n) {
  Grid g(n);
  const int segs = f.segments();
  std::vector<Matrix> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    Matrix acc = Matrix::Zero(f.rows(), f.cols());
    int u0 = static_cast<int>(std::floor(lo * segs));
    if (u0 >= segs) u0 = segs - 1;
    for (int u = u0; u < segs; ++u) {
      const double slo = static_cast<double>(u) / segs;
      const double shi = static_cast<double>(u + 1) / segs;
      if (slo >= hi) break;
      const double a = std::max(lo, slo);
      const double b = std::min(hi, shi);
      if (b <= a) continue;
      acc += (b - a) * 0.5 * (f.eval(a) + f.eval(b));  // trapezoid, exact on a linear piece
    }
    out.push_back(acc * static_cast<double>(n));
  }
  return DiscreteParamPath(g, std::move(out));
}

// Nodal samples of a piecewise-linear path at i/n, i = 0..n-1.
inline DiscreteParamPath restrict_nodal(const ContinuumParamPath& f, int n) {
  Grid g(n);
  std::vector<Matrix> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(f.eval(g.node(i)));
  return DiscreteParamPath(g, std::move(out));
}

// Linear interpolation of nodal values onto a finer depth grid.  Positions
// beyond the last source node (n-1)/n hold its value.  n2 == n returns an
// exact copy.
inline DiscreteParamPath upsample(const DiscreteParamPath& p, int n2) {
  const int n = p.n();
  if (n2 < n) throw std::invalid_argument("upsample: target depth must be >= source depth");
  if (n2 == n) return p;
  std::vector<Matrix> out;
  out.reserve(n2);
  for (int j = 0; j < n2; ++j) {
    // position in source index units: (j/n2) / (1/n)
    const double x = static_cast<double>(j) * n / n2;
    int i = static_cast<int>(std::floor(x));
    if (i >= n - 1) {
      out.push_back(p.values[n - 1]);
    } else {
      const double s = x - i;
      out.push_back((1.0 - s) * p.values[i] + s * p.values[i + 1]);
    }
  }
  return DiscreteParamPath(Grid(n2), std::move(out));
}

// Piecewise-linear view of nodal values on [0,1]; source node i/n maps to
// position i/n, with the tail beyond (n-1)/n held constant.
inline ContinuumParamPath to_continuum(const DiscreteParamPath& p, int nodes) {
  const int n = p.n();
  std::vector<Matrix> out;
  out.reserve(nodes);
  for (int j = 0; j < nodes; ++j) {
    const double x = static_cast<double>(j) * n / (nodes - 1);
    int i = static_cast<int>(std::floor(x));
    if (i >= n - 1) {
      out.push_back(p.values[n - 1]);
    } else {
      const double s = x - i;
      out.push_back((1.0 - s) * p.values[i] + s * p.values[i + 1]);
    }
  }
  return ContinuumParamPath(std::move(out));
}

}  // namespace deeplimit
