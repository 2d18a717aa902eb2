#include "declip/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace declip::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Array& a, const Array& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.shape_str() +
                              " vs " + b.shape_str() + ")");
}

void check_same_graph(const char* op, Node* a, Node* b) {
  if (a->graph != b->graph)
    throw std::logic_error(std::string(op) + ": operands from different graphs");
}

}  // namespace

Node* Graph::input(Array v) {
  Array g(v.rows(), v.cols(), 0.0);
  nodes_.push_back(Node{this, static_cast<int>(nodes_.size()), "input", std::move(v),
                        std::move(g), {}, nullptr});
  return &nodes_.back();
}

Node* Graph::make(Array value, std::vector<Node*> parents, const char* op, BackwardFn fn) {
  Array g(value.rows(), value.cols(), 0.0);
  nodes_.push_back(Node{this, static_cast<int>(nodes_.size()), op, std::move(value),
                        std::move(g), std::move(parents), std::move(fn)});
  return &nodes_.back();
}

void Graph::backward(Node* root) {
  if (root == nullptr || root->graph != this)
    throw std::logic_error("backward: root not owned by this graph");
  if (!root->is_scalar())
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                root->value.shape_str());

  // Mark nodes reachable from the root; unreachable subgraphs contribute
  // nothing, so their grads stay untouched.
  std::vector<char> reach(nodes_.size(), 0);
  std::vector<Node*> stack{root};
  reach[root->id] = 1;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    for (Node* p : n->parents) {
      if (!reach[p->id]) {
        reach[p->id] = 1;
        stack.push_back(p);
      }
    }
  }

  // Pass-local buffers keep accumulation semantics exact across repeated calls.
  std::vector<Array> pass(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (reach[i]) pass[i] = Array(nodes_[i].value.rows(), nodes_[i].value.cols(), 0.0);
  pass[root->id][0] = 1.0;

  for (int id = root->id; id >= 0; --id) {
    if (!reach[id]) continue;
    Node& n = nodes_[id];
    if (!n.backward) continue;
    std::vector<Array*> pg(n.parents.size());
    for (size_t i = 0; i < n.parents.size(); ++i) pg[i] = &pass[n.parents[i]->id];
    n.backward(n, pass[id], pg);
  }

  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!reach[i]) continue;
    Node& n = nodes_[i];
    for (size_t j = 0; j < n.grad.size(); ++j) n.grad[j] += pass[i][j];
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) n.grad.fill(0.0);
}

// ---- primitives ----------------------------------------------------------

Node* matmul(Node* a, Node* b) {
  check_same_graph("matmul", a, b);
  if (a->value.cols() != b->value.rows()) shape_error("matmul", a->value, b->value);
  const int m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
  Array v(m, n);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const double ail = a->value.at(i, l);
      if (ail == 0.0) continue;
      for (int j = 0; j < n; ++j) v.at(i, j) += ail * b->value.at(l, j);
    }
  return a->graph->make(std::move(v), {a, b}, "matmul",
                        [m, k, n](const Node& self, const Array& g,
                                  const std::vector<Array*>& pg) {
                          const Array& av = self.parents[0]->value;
                          const Array& bv = self.parents[1]->value;
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) {
                              const double gij = g.at(i, j);
                              if (gij == 0.0) continue;
                              for (int l = 0; l < k; ++l) {
                                pg[0]->at(i, l) += gij * bv.at(l, j);
                                pg[1]->at(l, j) += av.at(i, l) * gij;
                              }
                            }
                        });
}

Node* transpose(Node* a) {
  const int m = a->value.rows(), n = a->value.cols();
  Array v(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v.at(j, i) = a->value.at(i, j);
  return a->graph->make(std::move(v), {a}, "transpose",
                        [m, n](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) pg[0]->at(i, j) += g.at(j, i);
                        });
}

Node* add(Node* a, Node* b) {
  check_same_graph("add", a, b);
  if (!a->value.same_shape(b->value)) shape_error("add", a->value, b->value);
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
  return a->graph->make(std::move(v), {a, b}, "add",
                        [](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i) {
                            (*pg[0])[i] += g[i];
                            (*pg[1])[i] += g[i];
                          }
                        });
}

Node* sub(Node* a, Node* b) {
  check_same_graph("sub", a, b);
  if (!a->value.same_shape(b->value)) shape_error("sub", a->value, b->value);
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] -= b->value[i];
  return a->graph->make(std::move(v), {a, b}, "sub",
                        [](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i) {
                            (*pg[0])[i] += g[i];
                            (*pg[1])[i] -= g[i];
                          }
                        });
}

Node* mul(Node* a, Node* b) {
  check_same_graph("mul", a, b);
  if (!a->value.same_shape(b->value)) shape_error("mul", a->value, b->value);
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] *= b->value[i];
  return a->graph->make(std::move(v), {a, b}, "mul",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          const Array& av = self.parents[0]->value;
                          const Array& bv = self.parents[1]->value;
                          for (size_t i = 0; i < g.size(); ++i) {
                            (*pg[0])[i] += g[i] * bv[i];
                            (*pg[1])[i] += g[i] * av[i];
                          }
                        });
}

Node* scale(Node* a, double c) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] *= c;
  return a->graph->make(std::move(v), {a}, "scale",
                        [c](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
                        });
}

Node* add_const(Node* a, double c) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] += c;
  return a->graph->make(std::move(v), {a}, "add_const",
                        [](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                        });
}

Node* exp(Node* a) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(v[i]);
  return a->graph->make(std::move(v), {a}, "exp",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i)
                            (*pg[0])[i] += g[i] * self.value[i];
                        });
}

Node* log(Node* a) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::log(v[i] < kLogFloor ? kLogFloor : v[i]);
  return a->graph->make(std::move(v), {a}, "log",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          const Array& x = self.parents[0]->value;
                          for (size_t i = 0; i < g.size(); ++i)
                            if (x[i] > kLogFloor) (*pg[0])[i] += g[i] / x[i];
                        });
}

Node* relu(Node* a) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
  return a->graph->make(std::move(v), {a}, "relu",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          const Array& x = self.parents[0]->value;
                          for (size_t i = 0; i < g.size(); ++i)
                            if (x[i] > 0.0) (*pg[0])[i] += g[i];
                        });
}

Node* tanh(Node* a) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
  return a->graph->make(std::move(v), {a}, "tanh",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i)
                            (*pg[0])[i] += g[i] * (1.0 - self.value[i] * self.value[i]);
                        });
}

Node* reciprocal(Node* a) {
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / v[i];
  return a->graph->make(std::move(v), {a}, "reciprocal",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i)
                            (*pg[0])[i] -= g[i] * self.value[i] * self.value[i];
                        });
}

Node* sum(Node* a) {
  double s = 0.0;
  for (size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return a->graph->make(Array::scalar(s), {a}, "sum",
                        [](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += g[0];
                        });
}

Node* mean(Node* a) {
  if (a->value.size() == 0) throw std::invalid_argument("mean: empty array");
  double s = 0.0;
  for (size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  const double inv = 1.0 / static_cast<double>(a->value.size());
  return a->graph->make(Array::scalar(s * inv), {a}, "mean",
                        [inv](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += g[0] * inv;
                        });
}

Node* row_sum(Node* a) {
  const int m = a->value.rows(), n = a->value.cols();
  Array v(m, 1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v.at(i, 0) += a->value.at(i, j);
  return a->graph->make(std::move(v), {a}, "row_sum",
                        [m, n](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) pg[0]->at(i, j) += g.at(i, 0);
                        });
}

Node* row_sum_excl_diag(Node* a) {
  const int n = a->value.rows();
  if (a->value.cols() != n)
    throw std::invalid_argument("row_sum_excl_diag: square matrix required, got " +
                                a->value.shape_str());
  Array v(n, 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) v.at(i, 0) += a->value.at(i, j);
  return a->graph->make(std::move(v), {a}, "row_sum_excl_diag",
                        [n](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (int i = 0; i < n; ++i)
                            for (int j = 0; j < n; ++j)
                              if (j != i) pg[0]->at(i, j) += g.at(i, 0);
                        });
}

Node* add_row_vector(Node* a, Node* b) {
  check_same_graph("add_row_vector", a, b);
  if (b->value.rows() != 1 || b->value.cols() != a->value.cols())
    shape_error("add_row_vector", a->value, b->value);
  const int m = a->value.rows(), n = a->value.cols();
  Array v = a->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v.at(i, j) += b->value.at(0, j);
  return a->graph->make(std::move(v), {a, b}, "add_row_vector",
                        [m, n](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) {
                              pg[0]->at(i, j) += g.at(i, j);
                              pg[1]->at(0, j) += g.at(i, j);
                            }
                        });
}

Node* mul_scalar_node(Node* a, Node* s) {
  check_same_graph("mul_scalar_node", a, s);
  if (!s->is_scalar()) shape_error("mul_scalar_node", a->value, s->value);
  const double sv = s->value[0];
  Array v = a->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] *= sv;
  return a->graph->make(std::move(v), {a, s}, "mul_scalar_node",
                        [sv](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          const Array& av = self.parents[0]->value;
                          for (size_t i = 0; i < g.size(); ++i) {
                            (*pg[0])[i] += g[i] * sv;
                            (*pg[1])[0] += g[i] * av[i];
                          }
                        });
}

Node* l2_normalize_rows(Node* a) {
  const int m = a->value.rows(), n = a->value.cols();
  Array v(m, n);
  std::vector<double> norms(m);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a->value.at(i, j) * a->value.at(i, j);
    const double r = std::sqrt(s);
    if (r < 1e-12)
      throw std::runtime_error("l2_normalize_rows: degenerate embedding (zero-norm row " +
                               std::to_string(i) + ")");
    norms[i] = r;
    for (int j = 0; j < n; ++j) v.at(i, j) = a->value.at(i, j) / r;
  }
  return a->graph->make(
      std::move(v), {a}, "l2_normalize_rows",
      [m, n, norms](const Node& self, const Array& g, const std::vector<Array*>& pg) {
        // y = x / r  =>  dx = (g - y * <g, y>) / r, per row
        for (int i = 0; i < m; ++i) {
          double gy = 0.0;
          for (int j = 0; j < n; ++j) gy += g.at(i, j) * self.value.at(i, j);
          for (int j = 0; j < n; ++j)
            pg[0]->at(i, j) += (g.at(i, j) - self.value.at(i, j) * gy) / norms[i];
        }
      });
}

Node* dot(Node* a, Node* b) {
  check_same_graph("dot", a, b);
  if (!a->value.same_shape(b->value)) shape_error("dot", a->value, b->value);
  double s = 0.0;
  for (size_t i = 0; i < a->value.size(); ++i) s += a->value[i] * b->value[i];
  return a->graph->make(Array::scalar(s), {a, b}, "dot",
                        [](const Node& self, const Array& g, const std::vector<Array*>& pg) {
                          const Array& av = self.parents[0]->value;
                          const Array& bv = self.parents[1]->value;
                          for (size_t i = 0; i < av.size(); ++i) {
                            (*pg[0])[i] += g[0] * bv[i];
                            (*pg[1])[i] += g[0] * av[i];
                          }
                        });
}

Node* concat_rows(Node* a, Node* b) {
  check_same_graph("concat_rows", a, b);
  if (a->value.cols() != b->value.cols()) shape_error("concat_rows", a->value, b->value);
  const int m1 = a->value.rows(), m2 = b->value.rows(), n = a->value.cols();
  Array v(m1 + m2, n);
  for (int i = 0; i < m1; ++i)
    for (int j = 0; j < n; ++j) v.at(i, j) = a->value.at(i, j);
  for (int i = 0; i < m2; ++i)
    for (int j = 0; j < n; ++j) v.at(m1 + i, j) = b->value.at(i, j);
  return a->graph->make(std::move(v), {a, b}, "concat_rows",
                        [m1, m2, n](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (int i = 0; i < m1; ++i)
                            for (int j = 0; j < n; ++j) pg[0]->at(i, j) += g.at(i, j);
                          for (int i = 0; i < m2; ++i)
                            for (int j = 0; j < n; ++j) pg[1]->at(i, j) += g.at(m1 + i, j);
                        });
}

Node* gather_cols(Node* a, std::vector<int> idx) {
  const int m = a->value.rows(), n = a->value.cols();
  if (static_cast<int>(idx.size()) != m)
    throw std::invalid_argument("gather_cols: need " + std::to_string(m) + " indices, got " +
                                std::to_string(idx.size()));
  for (int i = 0; i < m; ++i)
    if (idx[i] < 0 || idx[i] >= n)
      throw std::invalid_argument("gather_cols: index " + std::to_string(idx[i]) +
                                  " out of range for " + a->value.shape_str());
  Array v(m, 1);
  for (int i = 0; i < m; ++i) v.at(i, 0) = a->value.at(i, idx[i]);
  return a->graph->make(std::move(v), {a}, "gather_cols",
                        [idx](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < idx.size(); ++i)
                            pg[0]->at(static_cast<int>(i), idx[i]) += g.at(static_cast<int>(i), 0);
                        });
}

Node* gather_rows(Node* a, std::vector<int> idx) {
  if (a->value.cols() != 1)
    throw std::invalid_argument("gather_rows: column vector required, got " +
                                a->value.shape_str());
  const int m = a->value.rows();
  for (int i : idx)
    if (i < 0 || i >= m)
      throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                  " out of range for " + a->value.shape_str());
  Array v(static_cast<int>(idx.size()), 1);
  for (size_t i = 0; i < idx.size(); ++i) v.at(static_cast<int>(i), 0) = a->value.at(idx[i], 0);
  return a->graph->make(std::move(v), {a}, "gather_rows",
                        [idx](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < idx.size(); ++i)
                            pg[0]->at(idx[i], 0) += g.at(static_cast<int>(i), 0);
                        });
}

Node* diag(Node* a) {
  const int n = a->value.rows();
  if (a->value.cols() != n)
    throw std::invalid_argument("diag: square matrix required, got " + a->value.shape_str());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  return gather_cols(a, std::move(idx));
}

Node* sub_rows_const(Node* a, std::vector<double> c) {
  const int m = a->value.rows(), n = a->value.cols();
  if (static_cast<int>(c.size()) != m)
    throw std::invalid_argument("sub_rows_const: need " + std::to_string(m) +
                                " constants, got " + std::to_string(c.size()));
  Array v = a->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v.at(i, j) -= c[i];
  return a->graph->make(std::move(v), {a}, "sub_rows_const",
                        [](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                        });
}

Node* at(Node* a, int r, int c) {
  if (r < 0 || r >= a->value.rows() || c < 0 || c >= a->value.cols())
    throw std::invalid_argument("at: (" + std::to_string(r) + "," + std::to_string(c) +
                                ") out of range for " + a->value.shape_str());
  return a->graph->make(Array::scalar(a->value.at(r, c)), {a}, "at",
                        [r, c](const Node&, const Array& g, const std::vector<Array*>& pg) {
                          pg[0]->at(r, c) += g[0];
                        });
}

}  // namespace declip::ad
