#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mkgc/matrix.hpp"
#include "mkgc/numerics.hpp"

namespace mkgc::ad {

class Tape;
struct Node;
using NodeRef = std::shared_ptr<Node>;

// One value in the recorded computation. Nodes are created in topological
// order (parents before children), so reverse creation order is a valid
// backward schedule.
struct Node {
    Matrix2D value;
    Matrix2D grad; // allocated by Tape::backward for nodes that need it
    bool needs_grad = false;
    std::vector<NodeRef> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(Node&)> backward_fn;
    Tape* tape = nullptr;
};

// Records a forward computation and replays it in reverse for gradients.
// A parameter bound twice resolves to the same node, so weight sharing
// (e.g. textual keys reused as visual prefix keys) accumulates correctly.
class Tape {
public:
    NodeRef constant(Matrix2D v);
    NodeRef param(Parameter& p);
    NodeRef make(Matrix2D value, std::vector<NodeRef> parents,
                 std::function<void(Node&)> backward_fn);

    // Seeds d(loss)/d(loss) = 1, walks the tape in reverse, then adds each
    // bound unfrozen parameter's node grad into Parameter::gradient. Frozen
    // parameters keep whatever is in their gradient buffer (zero after
    // zero_grad). `loss` must be a finite 1x1 node from this tape.
    void backward(const NodeRef& loss);

    std::size_t node_count() const { return order_.size(); }

private:
    std::vector<NodeRef> order_;
    std::vector<std::pair<Parameter*, NodeRef>> bindings_;
    std::unordered_map<Parameter*, NodeRef> bound_;
};

// --- op builders -----------------------------------------------------------

NodeRef matmul(const NodeRef& a, const NodeRef& b);
NodeRef add(const NodeRef& a, const NodeRef& b);
NodeRef add_rowvec(const NodeRef& a, const NodeRef& r);
NodeRef scale(const NodeRef& a, double c);
NodeRef transpose(const NodeRef& a);
NodeRef relu(const NodeRef& a);
NodeRef softmax_rows(const NodeRef& a);
NodeRef layer_norm(const NodeRef& x, const NodeRef& gamma, const NodeRef& beta, double eps);
NodeRef concat_rows(const NodeRef& a, const NodeRef& b);
NodeRef concat_cols(const std::vector<NodeRef>& parts);
NodeRef slice_rows(const NodeRef& a, std::size_t r0, std::size_t r1);
NodeRef pick_row(const NodeRef& a, std::size_t i);

// Embedding lookup over two stacked tables: ids < tab_a.rows index tab_a,
// the rest index tab_b at (id - tab_a.rows). Backward scatter-adds.
NodeRef gather_rows2(const NodeRef& tab_a, const NodeRef& tab_b, const std::vector<int>& ids);

// Scalar (1x1) outputs.
NodeRef cross_entropy_loss(const NodeRef& logits_row, int target);
NodeRef bce_multilabel_loss(const NodeRef& logits_row, const std::vector<double>& targets01);
NodeRef sum_scalars(const std::vector<NodeRef>& scalars);
NodeRef half_sum_squares(const NodeRef& a);

} // namespace mkgc::ad
