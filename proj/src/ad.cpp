#include "ncrf/ad.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ncrf::ad {

namespace {

thread_local bool g_grad_enabled = true;

bool recording(std::initializer_list<const Tensor*> parents) {
  if (!g_grad_enabled) return false;
  for (const Tensor* p : parents)
    if ((*p)->requires_grad) return true;
  return false;
}

void accum(Node& n, const Mat& g) {
  if (!n.requires_grad) return;
  ensure_grad(n);
  n.grad += g;
}

Tensor wrap(Mat v) { return std::make_shared<Node>(std::move(v)); }

inline Vec3 cross3(const Vec3& a, const Vec3& b) { return a.cross(b); }

}  // namespace

Tensor constant(Mat v) { return wrap(std::move(v)); }

Tensor leaf(Mat v) {
  auto t = wrap(std::move(v));
  t->requires_grad = true;
  return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved; }

void ensure_grad(Node& n) {
  if (n.grad.rows() != n.val.rows() || n.grad.cols() != n.val.cols())
    n.grad = Mat::Zero(n.val.rows(), n.val.cols());
}

void backward(const Tensor& root) {
  if (root->val.rows() != 1 || root->val.cols() != 1)
    throw NumericalError("backward: root must be a scalar");
  // iterative post-order DFS; traversal order is fully determined by the
  // graph, which keeps gradient accumulation deterministic
  std::vector<Node*> topo;
  std::unordered_set<Node*> done;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    auto [node, child] = stack.back();
    if (done.count(node)) {
      stack.pop_back();
      continue;
    }
    if (child < node->parents.size()) {
      stack.back().second++;
      Node* next = node->parents[child].get();
      if (!done.count(next) && next->requires_grad) stack.push_back({next, 0});
    } else {
      done.insert(node);
      topo.push_back(node);
      stack.pop_back();
    }
  }
  root->grad = Mat::Ones(1, 1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() > 0) n->backprop();
  }
}

// ---------------------------------------------------------------------------
// arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  auto out = wrap(a->val + b->val);
  if (recording({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node *o = out.get(), *pa = a.get(), *pb = b.get();
    out->backprop = [o, pa, pb] {
      accum(*pa, o->grad);
      accum(*pb, o->grad);
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto out = wrap(a->val - b->val);
  if (recording({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node *o = out.get(), *pa = a.get(), *pb = b.get();
    out->backprop = [o, pa, pb] {
      accum(*pa, o->grad);
      accum(*pb, -o->grad);
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto out = wrap(a->val.cwiseProduct(b->val));
  if (recording({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node *o = out.get(), *pa = a.get(), *pb = b.get();
    out->backprop = [o, pa, pb] {
      accum(*pa, o->grad.cwiseProduct(pb->val));
      accum(*pb, o->grad.cwiseProduct(pa->val));
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  auto out = wrap(a->val * s);
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, s] { accum(*pa, o->grad * s); };
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = wrap(a->val.array() + s);
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] { accum(*pa, o->grad); };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto out = wrap(a->val * b->val);
  if (recording({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node *o = out.get(), *pa = a.get(), *pb = b.get();
    out->backprop = [o, pa, pb] {
      if (pa->requires_grad) {
        ensure_grad(*pa);
        pa->grad.noalias() += o->grad * pb->val.transpose();
      }
      if (pb->requires_grad) {
        ensure_grad(*pb);
        pb->grad.noalias() += pa->val.transpose() * o->grad;
      }
    };
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  auto out = wrap(a->val.rowwise() + v->val.row(0));
  if (recording({&a, &v})) {
    out->requires_grad = true;
    out->parents = {a, v};
    Node *o = out.get(), *pa = a.get(), *pv = v.get();
    out->backprop = [o, pa, pv] {
      accum(*pa, o->grad);
      accum(*pv, o->grad.colwise().sum());
    };
  }
  return out;
}

Tensor rowwise_scale(const Tensor& a, const Tensor& s) {
  Mat v = a->val.array().colwise() * s->val.col(0).array();
  auto out = wrap(std::move(v));
  if (recording({&a, &s})) {
    out->requires_grad = true;
    out->parents = {a, s};
    Node *o = out.get(), *pa = a.get(), *ps = s.get();
    out->backprop = [o, pa, ps] {
      if (pa->requires_grad)
        accum(*pa, (o->grad.array().colwise() * ps->val.col(0).array()).matrix());
      if (ps->requires_grad)
        accum(*ps, o->grad.cwiseProduct(pa->val).rowwise().sum());
    };
  }
  return out;
}

Tensor repeat_row(const Tensor& v, int rows) {
  auto out = wrap(v->val.row(0).replicate(rows, 1));
  if (recording({&v})) {
    out->requires_grad = true;
    out->parents = {v};
    Node *o = out.get(), *pv = v.get();
    out->backprop = [o, pv] { accum(*pv, o->grad.colwise().sum()); };
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <typename FwdFn, typename DerivFn>
Tensor unary(const Tensor& a, FwdFn fwd, DerivFn deriv) {
  auto out = wrap(a->val.unaryExpr(fwd));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, deriv] {
      accum(*pa, o->grad.cwiseProduct(pa->val.unaryExpr(deriv)));
    };
  }
  return out;
}

double sigmoid_scalar(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  return unary(a, [](double x) { return x * sigmoid_scalar(x); },
               [](double x) {
                 double s = sigmoid_scalar(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return sigmoid_scalar(x); },
               [](double x) {
                 double s = sigmoid_scalar(x);
                 return s * (1.0 - s);
               });
}

Tensor softplus(const Tensor& a) {
  return unary(a, [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
               [](double x) { return sigmoid_scalar(x); });
}

Tensor tanh_f(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double x) {
                 double t = std::tanh(x);
                 return 1.0 - t * t;
               });
}

Tensor exp_f(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor abs_f(const Tensor& a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor recip(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

Tensor cos_half(const Tensor& a) {
  return unary(a, [](double x) { return std::cos(0.5 * x); },
               [](double x) { return -0.5 * std::sin(0.5 * x); });
}

Tensor sinc_half(const Tensor& a) {
  auto fwd = [](double x) {
    if (std::abs(x) < 1e-4) return 0.5 - x * x / 48.0;
    return std::sin(0.5 * x) / x;
  };
  auto deriv = [](double x) {
    if (std::abs(x) < 1e-4) return -x / 24.0;
    return (0.5 * x * std::cos(0.5 * x) - std::sin(0.5 * x)) / (x * x);
  };
  return unary(a, fwd, deriv);
}

Tensor tanhc(const Tensor& a) {
  auto fwd = [](double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 3.0;
    return std::tanh(x) / x;
  };
  auto deriv = [](double x) {
    if (std::abs(x) < 1e-4) return -2.0 * x / 3.0;
    double t = std::tanh(x);
    return ((1.0 - t * t) * x - t) / (x * x);
  };
  return unary(a, fwd, deriv);
}

// ---------------------------------------------------------------------------
// shape

Tensor transpose(const Tensor& a) {
  auto out = wrap(a->val.transpose());
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] { accum(*pa, o->grad.transpose()); };
  }
  return out;
}

Tensor hcat(const std::vector<Tensor>& parts) {
  int rows = int(parts[0]->val.rows());
  int cols = 0;
  for (const auto& p : parts) cols += int(p->val.cols());
  Mat v(rows, cols);
  int c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p->val.cols()) = p->val;
    c += int(p->val.cols());
  }
  auto out = wrap(std::move(v));
  bool need = false;
  if (g_grad_enabled)
    for (const auto& p : parts) need = need || p->requires_grad;
  if (need) {
    out->requires_grad = true;
    out->parents = parts;
    Node* o = out.get();
    out->backprop = [o] {
      int c = 0;
      for (auto& p : o->parents) {
        accum(*p, o->grad.middleCols(c, p->val.cols()));
        c += int(p->val.cols());
      }
    };
  }
  return out;
}

Tensor vcat(const std::vector<Tensor>& parts) {
  int cols = int(parts[0]->val.cols());
  int rows = 0;
  for (const auto& p : parts) rows += int(p->val.rows());
  Mat v(rows, cols);
  int r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p->val.rows()) = p->val;
    r += int(p->val.rows());
  }
  auto out = wrap(std::move(v));
  bool need = false;
  if (g_grad_enabled)
    for (const auto& p : parts) need = need || p->requires_grad;
  if (need) {
    out->requires_grad = true;
    out->parents = parts;
    Node* o = out.get();
    out->backprop = [o] {
      int r = 0;
      for (auto& p : o->parents) {
        accum(*p, o->grad.middleRows(r, p->val.rows()));
        r += int(p->val.rows());
      }
    };
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int n) {
  auto out = wrap(a->val.middleCols(c0, n));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, c0, n] {
      ensure_grad(*pa);
      pa->grad.middleCols(c0, n) += o->grad;
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int n) {
  auto out = wrap(a->val.middleRows(r0, n));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, r0, n] {
      ensure_grad(*pa);
      pa->grad.middleRows(r0, n) += o->grad;
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::vector<int> rows) {
  Mat v(rows.size(), a->val.cols());
  for (size_t i = 0; i < rows.size(); ++i) v.row(i) = a->val.row(rows[i]);
  auto out = wrap(std::move(v));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, rows = std::move(rows)] {
      ensure_grad(*pa);
      for (size_t i = 0; i < rows.size(); ++i) pa->grad.row(rows[i]) += o->grad.row(i);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  Mat v(1, 1);
  v(0, 0) = a->val.sum();
  auto out = wrap(std::move(v));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] {
      accum(*pa, Mat::Constant(pa->val.rows(), pa->val.cols(), o->grad(0, 0)));
    };
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / double(a->val.size())); }

Tensor sum_cols(const Tensor& a) {
  auto out = wrap(Mat(a->val.rowwise().sum()));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] { accum(*pa, o->grad.col(0).replicate(1, pa->val.cols())); };
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Mat v = a->val;
  for (int r = 0; r < v.rows(); ++r) {
    double mx = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - mx).exp();
    v.row(r) /= v.row(r).sum();
  }
  auto out = wrap(std::move(v));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] {
      Mat g = o->grad;
      Eigen::VectorXd dots = (g.cwiseProduct(o->val)).rowwise().sum();
      accum(*pa, o->val.cwiseProduct(g.colwise() - dots));
    };
  }
  return out;
}

Tensor max_rows(const Tensor& a) {
  Mat v(1, a->val.cols());
  std::vector<int> arg(a->val.cols());
  for (int c = 0; c < a->val.cols(); ++c) {
    int idx = 0;
    double best = a->val(0, c);
    for (int r = 1; r < a->val.rows(); ++r)
      if (a->val(r, c) > best) {
        best = a->val(r, c);
        idx = r;
      }
    v(0, c) = best;
    arg[c] = idx;
  }
  auto out = wrap(std::move(v));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa, arg = std::move(arg)] {
      ensure_grad(*pa);
      for (size_t c = 0; c < arg.size(); ++c) pa->grad(arg[c], c) += o->grad(0, c);
    };
  }
  return out;
}

Tensor rowwise_norm(const Tensor& a, double eps) {
  Eigen::VectorXd sq = a->val.rowwise().squaredNorm();
  Mat v = (sq.array() + eps * eps).sqrt();
  auto out = wrap(std::move(v));
  if (recording({&a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node *o = out.get(), *pa = a.get();
    out->backprop = [o, pa] {
      Eigen::VectorXd coeff = o->grad.col(0).array() / o->val.col(0).array();
      accum(*pa, (pa->val.array().colwise() * coeff.array()).matrix());
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor l1(const Tensor& a, const Tensor& b) { return mean(abs_f(sub(a, b))); }

// ---------------------------------------------------------------------------
// quaternions (rows are [w,x,y,z])

Tensor quat_normalize(const Tensor& q) {
  Mat v = q->val;
  for (int r = 0; r < v.rows(); ++r) v.row(r) /= v.row(r).norm();
  auto out = wrap(std::move(v));
  if (recording({&q})) {
    out->requires_grad = true;
    out->parents = {q};
    Node *o = out.get(), *pq = q.get();
    out->backprop = [o, pq] {
      ensure_grad(*pq);
      for (int r = 0; r < o->val.rows(); ++r) {
        double n = pq->val.row(r).norm();
        Eigen::RowVector4d u = o->val.row(r);
        Eigen::RowVector4d g = o->grad.row(r);
        pq->grad.row(r) += (g - u * g.dot(u)) / n;
      }
    };
  }
  return out;
}

Tensor quat_conjugate(const Tensor& q) {
  Mat v = q->val;
  v.middleCols(1, 3) *= -1.0;
  auto out = wrap(std::move(v));
  if (recording({&q})) {
    out->requires_grad = true;
    out->parents = {q};
    Node *o = out.get(), *pq = q.get();
    out->backprop = [o, pq] {
      Mat g = o->grad;
      g.middleCols(1, 3) *= -1.0;
      accum(*pq, g);
    };
  }
  return out;
}

namespace {

inline Eigen::RowVector4d hamilton(const Eigen::RowVector4d& a, const Eigen::RowVector4d& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

// out = a (x) b as matrix acting on a: out = R(b) a
inline Eigen::Matrix4d right_mul_matrix(const Eigen::RowVector4d& b) {
  Eigen::Matrix4d m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1],  b[0],  b[3], -b[2],
       b[2], -b[3],  b[0],  b[1],
       b[3],  b[2], -b[1],  b[0];
  return m;
}

// out = a (x) b as matrix acting on b: out = L(a) b
inline Eigen::Matrix4d left_mul_matrix(const Eigen::RowVector4d& a) {
  Eigen::Matrix4d m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1],  a[0], -a[3],  a[2],
       a[2],  a[3],  a[0], -a[1],
       a[3], -a[2],  a[1],  a[0];
  return m;
}

}  // namespace

Tensor quat_mul(const Tensor& a, const Tensor& b) {
  int rows = int(std::max(a->val.rows(), b->val.rows()));
  Mat v(rows, 4);
  auto arow = [&](int r) -> Eigen::RowVector4d { return a->val.row(a->val.rows() == 1 ? 0 : r); };
  auto brow = [&](int r) -> Eigen::RowVector4d { return b->val.row(b->val.rows() == 1 ? 0 : r); };
  for (int r = 0; r < rows; ++r) v.row(r) = hamilton(arow(r), brow(r));
  auto out = wrap(std::move(v));
  if (recording({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node *o = out.get(), *pa = a.get(), *pb = b.get();
    out->backprop = [o, pa, pb] {
      ensure_grad(*pa);
      ensure_grad(*pb);
      for (int r = 0; r < o->val.rows(); ++r) {
        Eigen::RowVector4d g = o->grad.row(r);
        int ra = pa->val.rows() == 1 ? 0 : r;
        int rb = pb->val.rows() == 1 ? 0 : r;
        if (pa->requires_grad)
          pa->grad.row(ra) += g * right_mul_matrix(pb->val.row(rb));
        if (pb->requires_grad)
          pb->grad.row(rb) += g * left_mul_matrix(pa->val.row(ra));
      }
    };
  }
  return out;
}

namespace {
inline Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}
}  // namespace

Tensor quat_rotate(const Tensor& q, const Tensor& p) {
  const bool bq = q->val.rows() == 1;
  const int rows = int(p->val.rows());
  Mat v(rows, 3);
  for (int r = 0; r < rows; ++r) {
    Eigen::RowVector4d quat = q->val.row(bq ? 0 : r);
    double w = quat[0];
    Vec3 u(quat[1], quat[2], quat[3]);
    Vec3 x = p->val.row(r).transpose();
    Vec3 uxv = cross3(u, x);
    v.row(r) = (x + 2.0 * w * uxv + 2.0 * cross3(u, uxv)).transpose();
  }
  auto out = wrap(std::move(v));
  if (recording({&q, &p})) {
    out->requires_grad = true;
    out->parents = {q, p};
    Node *o = out.get(), *pq = q.get(), *pp = p.get();
    out->backprop = [o, pq, pp, bq, rows] {
      ensure_grad(*pq);
      ensure_grad(*pp);
      for (int r = 0; r < rows; ++r) {
        Eigen::RowVector4d quat = pq->val.row(bq ? 0 : r);
        double w = quat[0];
        Vec3 u(quat[1], quat[2], quat[3]);
        Vec3 x = pp->val.row(r).transpose();
        Vec3 g = o->grad.row(r).transpose();
        if (pp->requires_grad) {
          // d out / d x = I + 2w [u]x + 2 [u]x [u]x
          Eigen::Matrix3d J = Eigen::Matrix3d::Identity() + 2.0 * w * skew(u) + 2.0 * skew(u) * skew(u);
          pp->grad.row(r) += (J.transpose() * g).transpose();
        }
        if (pq->requires_grad) {
          Vec3 uxv = cross3(u, x);
          double gw = 2.0 * g.dot(uxv);
          Eigen::Matrix3d Ju = -2.0 * w * skew(x) - 2.0 * (skew(uxv) + skew(u) * skew(x));
          Vec3 gu = Ju.transpose() * g;
          pq->grad(bq ? 0 : r, 0) += gw;
          pq->grad(bq ? 0 : r, 1) += gu.x();
          pq->grad(bq ? 0 : r, 2) += gu.y();
          pq->grad(bq ? 0 : r, 3) += gu.z();
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// positional encoding

Tensor posenc(const Tensor& p, int frequencies) {
  const int rows = int(p->val.rows());
  const int dims = int(p->val.cols());
  Mat v(rows, dims + 2 * dims * frequencies);
  v.leftCols(dims) = p->val;
  for (int f = 0; f < frequencies; ++f) {
    double k = M_PI * std::pow(2.0, f);
    v.middleCols(dims + 2 * dims * f, dims) = (k * p->val.array()).sin();
    v.middleCols(dims + 2 * dims * f + dims, dims) = (k * p->val.array()).cos();
  }
  auto out = wrap(std::move(v));
  if (recording({&p})) {
    out->requires_grad = true;
    out->parents = {p};
    Node *o = out.get(), *pp = p.get();
    out->backprop = [o, pp, frequencies, dims] {
      Mat g = o->grad.leftCols(dims);
      for (int f = 0; f < frequencies; ++f) {
        double k = M_PI * std::pow(2.0, f);
        g.array() += o->grad.middleCols(dims + 2 * dims * f, dims).array() *
                     (k * pp->val.array()).cos() * k;
        g.array() -= o->grad.middleCols(dims + 2 * dims * f + dims, dims).array() *
                     (k * pp->val.array()).sin() * k;
      }
      accum(*pp, g);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// grid sampling

namespace {

struct GridCell {
  int base[3];
  double frac[3];
  bool clamped[3];
  double clamp_dist;
  Vec3 clamp_dir;  // d(clamp_dist)/dp
};

GridCell locate_cell(const GridMeta& meta, const Vec3& p) {
  GridCell c;
  Vec3 local = (p - meta.origin) / meta.voxel;
  Vec3 clamped = local;
  for (int k = 0; k < 3; ++k) {
    clamped[k] = std::clamp(local[k], 0.0, double(meta.resolution[k] - 1));
    c.clamped[k] = clamped[k] != local[k];
  }
  Vec3 diff = (local - clamped) * meta.voxel;
  c.clamp_dist = diff.norm();
  c.clamp_dir = c.clamp_dist > 0 ? Vec3(diff / c.clamp_dist) : Vec3::Zero();
  for (int k = 0; k < 3; ++k) {
    int i = std::min(int(clamped[k]), meta.resolution[k] - 2);
    i = std::max(i, 0);
    c.base[k] = i;
    c.frac[k] = clamped[k] - i;
  }
  return c;
}

inline size_t voxel_index(const GridMeta& meta, int x, int y, int z) {
  return (size_t(z) * meta.resolution[1] + y) * meta.resolution[0] + x;
}

}  // namespace

Tensor grid_sample(const Tensor& grid, const GridMeta& meta, const Tensor& points,
                   bool add_clamp_distance) {
  const int rows = int(points->val.rows());
  const int C = meta.channels;
  Mat v(rows, C);
  for (int r = 0; r < rows; ++r) {
    GridCell c = locate_cell(meta, points->val.row(r).transpose());
    for (int ch = 0; ch < C; ++ch) {
      double acc = 0;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            double w = (dx ? c.frac[0] : 1 - c.frac[0]) * (dy ? c.frac[1] : 1 - c.frac[1]) *
                       (dz ? c.frac[2] : 1 - c.frac[2]);
            acc += w * grid->val(voxel_index(meta, c.base[0] + dx, c.base[1] + dy, c.base[2] + dz), ch);
          }
      v(r, ch) = acc + (add_clamp_distance ? c.clamp_dist : 0.0);
    }
  }
  auto out = wrap(std::move(v));
  if (recording({&grid, &points})) {
    out->requires_grad = true;
    out->parents = {grid, points};
    Node *o = out.get(), *pg = grid.get(), *pp = points.get();
    out->backprop = [o, pg, pp, meta, add_clamp_distance] {
      const int rows = int(pp->val.rows());
      const int C = meta.channels;
      if (pg->requires_grad) ensure_grad(*pg);
      if (pp->requires_grad) ensure_grad(*pp);
      for (int r = 0; r < rows; ++r) {
        GridCell c = locate_cell(meta, pp->val.row(r).transpose());
        Vec3 gp = Vec3::Zero();
        for (int ch = 0; ch < C; ++ch) {
          double g = o->grad(r, ch);
          if (g == 0.0) continue;
          double dgrad[3] = {0, 0, 0};
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                double wx = dx ? c.frac[0] : 1 - c.frac[0];
                double wy = dy ? c.frac[1] : 1 - c.frac[1];
                double wz = dz ? c.frac[2] : 1 - c.frac[2];
                size_t idx = voxel_index(meta, c.base[0] + dx, c.base[1] + dy, c.base[2] + dz);
                if (pg->requires_grad) pg->grad(idx, ch) += g * wx * wy * wz;
                if (pp->requires_grad) {
                  double val = pg->val(idx, ch);
                  dgrad[0] += (dx ? 1.0 : -1.0) * wy * wz * val;
                  dgrad[1] += (dy ? 1.0 : -1.0) * wx * wz * val;
                  dgrad[2] += (dz ? 1.0 : -1.0) * wx * wy * val;
                }
              }
          if (pp->requires_grad) {
            for (int k = 0; k < 3; ++k)
              gp[k] += c.clamped[k] ? 0.0 : g * dgrad[k] / meta.voxel;
            if (add_clamp_distance) gp += g * c.clamp_dir;
          }
        }
        if (pp->requires_grad) pp->grad.row(r) += gp.transpose();
      }
    };
  }
  return out;
}

Tensor grid_fade(const GridMeta& meta, const Tensor& points, double band) {
  const int rows = int(points->val.rows());
  auto eval = [&meta, band](const Vec3& p, Vec3* dfade) {
    Vec3 local = (p - meta.origin) / meta.voxel;
    double s[3], ds[3];
    for (int k = 0; k < 3; ++k) {
      double border = std::min(local[k], meta.resolution[k] - 1 - local[k]);
      double sign_k = local[k] < meta.resolution[k] - 1 - local[k] ? 1.0 : -1.0;
      double t = border / band;
      if (t <= 0) {
        s[k] = 0;
        ds[k] = 0;
      } else if (t >= 1) {
        s[k] = 1;
        ds[k] = 0;
      } else {
        s[k] = t * t * (3 - 2 * t);
        ds[k] = 6 * t * (1 - t) * sign_k / (band * meta.voxel);
      }
    }
    double fade = s[0] * s[1] * s[2];
    if (dfade) {
      (*dfade)[0] = ds[0] * s[1] * s[2];
      (*dfade)[1] = s[0] * ds[1] * s[2];
      (*dfade)[2] = s[0] * s[1] * ds[2];
    }
    return fade;
  };
  Mat v(rows, 1);
  for (int r = 0; r < rows; ++r) v(r, 0) = eval(points->val.row(r).transpose(), nullptr);
  auto out = wrap(std::move(v));
  if (recording({&points})) {
    out->requires_grad = true;
    out->parents = {points};
    Node *o = out.get(), *pp = points.get();
    out->backprop = [o, pp, eval] {
      ensure_grad(*pp);
      for (int r = 0; r < pp->val.rows(); ++r) {
        Vec3 d;
        eval(pp->val.row(r).transpose(), &d);
        pp->grad.row(r) += o->grad(r, 0) * d.transpose();
      }
    };
  }
  return out;
}

Tensor capsule_distance(const Tensor& points, const Vec3& a, const Vec3& b, double radius) {
  const int rows = int(points->val.rows());
  Vec3 ab = b - a;
  double ab2 = ab.squaredNorm();
  Mat v(rows, 1);
  for (int r = 0; r < rows; ++r) {
    Vec3 p = points->val.row(r).transpose();
    double t = ab2 > 0 ? std::clamp((p - a).dot(ab) / ab2, 0.0, 1.0) : 0.0;
    v(r, 0) = (p - (a + t * ab)).norm() - radius;
  }
  auto out = wrap(std::move(v));
  if (recording({&points})) {
    out->requires_grad = true;
    out->parents = {points};
    Node *o = out.get(), *pp = points.get();
    out->backprop = [o, pp, a, ab, ab2] {
      ensure_grad(*pp);
      for (int r = 0; r < pp->val.rows(); ++r) {
        Vec3 p = pp->val.row(r).transpose();
        double t = ab2 > 0 ? std::clamp((p - a).dot(ab) / ab2, 0.0, 1.0) : 0.0;
        Vec3 d = p - (a + t * ab);
        double n = d.norm();
        if (n > 1e-12) pp->grad.row(r) += o->grad(r, 0) * (d / n).transpose();
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// volume rendering

Tensor volume_render(const Tensor& sigma, const Tensor& rgb, const Eigen::VectorXd& delta,
                     int samples_per_ray) {
  const int S = int(sigma->val.rows());
  const int R = S / samples_per_ray;
  Mat v = Mat::Zero(R, 4);
  for (int r = 0; r < R; ++r) {
    double T = 1.0;
    for (int i = 0; i < samples_per_ray; ++i) {
      int s = r * samples_per_ray + i;
      double alpha = 1.0 - std::exp(-sigma->val(s, 0) * delta[s]);
      double w = T * alpha;
      v.row(r).head(3) += w * rgb->val.row(s).head(3);
      v(r, 3) += w;
      T *= 1.0 - alpha;
    }
  }
  auto out = wrap(std::move(v));
  if (recording({&sigma, &rgb})) {
    out->requires_grad = true;
    out->parents = {sigma, rgb};
    Node *o = out.get(), *ps = sigma.get(), *pc = rgb.get();
    out->backprop = [o, ps, pc, delta, samples_per_ray] {
      const int S = int(ps->val.rows());
      const int R = S / samples_per_ray;
      if (ps->requires_grad) ensure_grad(*ps);
      if (pc->requires_grad) ensure_grad(*pc);
      std::vector<double> T(samples_per_ray + 1), alpha(samples_per_ray);
      for (int r = 0; r < R; ++r) {
        Eigen::RowVector3d gc = o->grad.row(r).head(3);
        double go = o->grad(r, 3);
        T[0] = 1.0;
        for (int i = 0; i < samples_per_ray; ++i) {
          int s = r * samples_per_ray + i;
          alpha[i] = 1.0 - std::exp(-ps->val(s, 0) * delta[s]);
          T[i + 1] = T[i] * (1.0 - alpha[i]);
        }
        // b_i = dL/dw_i; sigma_j gets T_j d_j (1-a_j) b_j - d_j sum_{i>j} w_i b_i
        double suffix = 0;  // sum_{i > j} w_i b_i, built back-to-front
        for (int i = samples_per_ray - 1; i >= 0; --i) {
          int s = r * samples_per_ray + i;
          double b = gc.dot(pc->val.row(s).head(3)) + go;
          double w = T[i] * alpha[i];
          if (pc->requires_grad) pc->grad.row(s) += (T[i] * alpha[i]) * gc;
          if (ps->requires_grad)
            ps->grad(s, 0) += delta[s] * (T[i] * (1.0 - alpha[i]) * b - suffix);
          suffix += w * b;
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimizer

void round_to_f32(Mat& m) {
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r) m(r, c) = double(float(m(r, c)));
}

void adam_step(Node& param, AdamState& state, const AdamConfig& cfg) {
  if (param.grad.size() == 0) return;
  if (state.m.size() == 0) {
    state.m = Mat::Zero(param.val.rows(), param.val.cols());
    state.v = Mat::Zero(param.val.rows(), param.val.cols());
  }
  state.step += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * param.grad;
  state.v = cfg.beta2 * state.v.array() + (1.0 - cfg.beta2) * param.grad.array().square();
  double c1 = 1.0 - std::pow(cfg.beta1, state.step);
  double c2 = 1.0 - std::pow(cfg.beta2, state.step);
  param.val.array() -=
      cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
  round_to_f32(param.val);
  round_to_f32(state.m);
  round_to_f32(state.v);
}

}  // namespace ncrf::ad
