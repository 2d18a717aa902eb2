#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "declip/array.hpp"

namespace declip::ad {

class Graph;
struct Node;

// Propagates the pass-local upstream gradient `g` into the parents' pass
// buffers `pg` (aligned with self.parents).
using BackwardFn =
    std::function<void(const Node& self, const Array& g, const std::vector<Array*>& pg)>;

struct Node {
  Graph* graph = nullptr;
  int id = -1;
  const char* op = "";
  Array value;
  Array grad;  // same shape as value; zero until backward
  std::vector<Node*> parents;
  BackwardFn backward;

  bool is_scalar() const { return value.rows() == 1 && value.cols() == 1; }
  double scalar() const { return value.scalar_value(); }
};

// Tape-style computation graph, rebuilt per step. Nodes are appended in
// creation order, so reverse tape order is a valid reverse-topological order.
// A graph and its nodes are confined to one thread.
class Graph {
 public:
  Node* input(Array v);
  Node* constant(Array v) { return input(std::move(v)); }
  Node* scalar(double v) { return input(Array::scalar(v)); }
  Node* make(Array value, std::vector<Node*> parents, const char* op, BackwardFn fn);

  // Accumulates d(root)/d(node.value) into every reachable node's grad.
  // Each call adds a fresh pass, so repeated calls without zero_grad sum.
  void backward(Node* root);

  void zero_grad();
  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

// ---- primitives ----------------------------------------------------------

Node* matmul(Node* a, Node* b);                 // [m,k]x[k,n] -> [m,n]
Node* transpose(Node* a);                       // [m,n] -> [n,m]
Node* add(Node* a, Node* b);                    // elementwise, same shape
Node* sub(Node* a, Node* b);
Node* mul(Node* a, Node* b);                    // elementwise, same shape
Node* scale(Node* a, double c);
Node* add_const(Node* a, double c);
Node* exp(Node* a);
Node* log(Node* a);                             // input floored at 1e-12
Node* relu(Node* a);                            // subgradient at 0 is 0
Node* tanh(Node* a);
Node* reciprocal(Node* a);
Node* sum(Node* a);                             // -> 1x1
Node* mean(Node* a);                            // -> 1x1
Node* row_sum(Node* a);                         // [m,n] -> [m,1]
Node* row_sum_excl_diag(Node* a);               // square [n,n] -> [n,1], skips a_ii
Node* add_row_vector(Node* a, Node* b);         // [m,n] + broadcast [1,n]
Node* mul_scalar_node(Node* a, Node* s);        // [m,n] * broadcast [1,1]
Node* l2_normalize_rows(Node* a);               // throws on zero-norm rows
Node* dot(Node* a, Node* b);                    // same shape -> 1x1
Node* concat_rows(Node* a, Node* b);            // [m1,n] + [m2,n] -> [m1+m2,n]
Node* gather_cols(Node* a, std::vector<int> idx);  // v[i] = a[i, idx[i]] -> [m,1]
Node* gather_rows(Node* a, std::vector<int> idx);  // column vector a: v[i] = a[idx[i], 0]
Node* diag(Node* a);                            // square -> [n,1]
Node* sub_rows_const(Node* a, std::vector<double> c);  // a[i,j] - c[i], constant shift
Node* at(Node* a, int r, int c);                // single element -> 1x1

// Floor applied inside log() before both the value and the derivative.
inline constexpr double kLogFloor = 1e-12;

}  // namespace declip::ad
