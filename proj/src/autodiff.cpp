#include "mkgc/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace mkgc::ad {

namespace {

Tape* tape_of(const NodeRef& n) {
    if (!n || n->tape == nullptr) throw state_error("autodiff op on detached node");
    return n->tape;
}

void check_same_tape(const NodeRef& a, const NodeRef& b) {
    if (tape_of(a) != tape_of(b)) throw state_error("autodiff op across tapes");
}

} // namespace

NodeRef Tape::constant(Matrix2D v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->needs_grad = false;
    n->tape = this;
    order_.push_back(n);
    return n;
}

NodeRef Tape::param(Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->needs_grad = !p.frozen;
    n->tape = this;
    order_.push_back(n);
    bound_.emplace(&p, n);
    bindings_.emplace_back(&p, n);
    return n;
}

NodeRef Tape::make(Matrix2D value, std::vector<NodeRef> parents,
                   std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->tape = this;
    for (const auto& p : parents) {
        if (p->tape != this) throw state_error("parent node from a different tape");
        if (p->needs_grad) n->needs_grad = true;
    }
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
    order_.push_back(n);
    return n;
}

void Tape::backward(const NodeRef& loss) {
    if (order_.empty()) throw state_error("backward before any forward computation");
    if (!loss || loss->tape != this) throw state_error("backward on a node from a different tape");
    if (loss->value.rows != 1 || loss->value.cols != 1) {
        throw shape_error("backward target must be a 1x1 scalar");
    }
    if (!std::isfinite(loss->value(0, 0))) throw numeric_error("loss is non-finite");

    for (auto& n : order_) {
        if (n->needs_grad) {
            n->grad = Matrix2D(n->value.rows, n->value.cols);
        }
    }
    if (!loss->needs_grad) {
        // Loss does not depend on any trainable parameter; all grads stay zero.
        return;
    }
    loss->grad(0, 0) = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node& n = **it;
        if (n.needs_grad && n.backward_fn) n.backward_fn(n);
    }
    for (auto& [p, n] : bindings_) {
        if (!p->frozen) add_inplace(p->gradient, n->grad);
    }
}

// --- ops --------------------------------------------------------------------

NodeRef matmul(const NodeRef& a, const NodeRef& b) {
    check_same_tape(a, b);
    Matrix2D v = mkgc::matmul(a->value, b->value);
    return tape_of(a)->make(std::move(v), {a, b}, [](Node& n) {
        const NodeRef& a = n.parents[0];
        const NodeRef& b = n.parents[1];
        if (a->needs_grad) add_inplace(a->grad, mkgc::matmul(n.grad, mkgc::transpose(b->value)));
        if (b->needs_grad) add_inplace(b->grad, mkgc::matmul(mkgc::transpose(a->value), n.grad));
    });
}

NodeRef add(const NodeRef& a, const NodeRef& b) {
    check_same_tape(a, b);
    Matrix2D v = mkgc::add(a->value, b->value);
    return tape_of(a)->make(std::move(v), {a, b}, [](Node& n) {
        for (const auto& p : n.parents) {
            if (p->needs_grad) add_inplace(p->grad, n.grad);
        }
    });
}

NodeRef add_rowvec(const NodeRef& a, const NodeRef& r) {
    check_same_tape(a, r);
    Matrix2D v = mkgc::add_rowvec(a->value, r->value);
    return tape_of(a)->make(std::move(v), {a, r}, [](Node& n) {
        const NodeRef& a = n.parents[0];
        const NodeRef& r = n.parents[1];
        if (a->needs_grad) add_inplace(a->grad, n.grad);
        if (r->needs_grad) {
            for (std::size_t i = 0; i < n.grad.rows; ++i) {
                for (std::size_t j = 0; j < n.grad.cols; ++j) {
                    r->grad(0, j) += n.grad(i, j);
                }
            }
        }
    });
}

NodeRef scale(const NodeRef& a, double c) {
    Matrix2D v = mkgc::scale(a->value, c);
    return tape_of(a)->make(std::move(v), {a}, [c](Node& n) {
        if (n.parents[0]->needs_grad) {
            add_inplace(n.parents[0]->grad, mkgc::scale(n.grad, c));
        }
    });
}

NodeRef transpose(const NodeRef& a) {
    Matrix2D v = mkgc::transpose(a->value);
    return tape_of(a)->make(std::move(v), {a}, [](Node& n) {
        if (n.parents[0]->needs_grad) {
            add_inplace(n.parents[0]->grad, mkgc::transpose(n.grad));
        }
    });
}

NodeRef relu(const NodeRef& a) {
    Matrix2D v = mkgc::relu(a->value);
    return tape_of(a)->make(std::move(v), {a}, [](Node& n) {
        const NodeRef& a = n.parents[0];
        if (!a->needs_grad) return;
        for (std::size_t i = 0; i < a->grad.data.size(); ++i) {
            if (a->value.data[i] > 0.0) a->grad.data[i] += n.grad.data[i];
        }
    });
}

NodeRef softmax_rows(const NodeRef& a) {
    Matrix2D v = mkgc::softmax_rows(a->value);
    return tape_of(a)->make(std::move(v), {a}, [](Node& n) {
        const NodeRef& a = n.parents[0];
        if (!a->needs_grad) return;
        // dx_i = s_i .* (g_i - <s_i, g_i>)
        for (std::size_t i = 0; i < n.value.rows; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n.value.cols; ++j) dot += n.value(i, j) * n.grad(i, j);
            for (std::size_t j = 0; j < n.value.cols; ++j) {
                a->grad(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
            }
        }
    });
}

NodeRef layer_norm(const NodeRef& x, const NodeRef& gamma, const NodeRef& beta, double eps) {
    check_same_tape(x, gamma);
    check_same_tape(x, beta);
    Matrix2D v = mkgc::layer_norm(x->value, gamma->value, beta->value, eps);
    return tape_of(x)->make(std::move(v), {x, gamma, beta}, [eps](Node& n) {
        const NodeRef& x = n.parents[0];
        const NodeRef& gamma = n.parents[1];
        const NodeRef& beta = n.parents[2];
        const std::size_t cols = x->value.cols;
        const double dn = static_cast<double>(cols);
        for (std::size_t i = 0; i < x->value.rows; ++i) {
            double mean = 0.0;
            for (std::size_t j = 0; j < cols; ++j) mean += x->value(i, j);
            mean /= dn;
            double var = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = x->value(i, j) - mean;
                var += d * d;
            }
            var /= dn;
            const double inv = 1.0 / std::sqrt(var + eps);

            // xhat_j = (x_j - mean) * inv; dxhat_j = g_j * gamma_j
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (x->value(i, j) - mean) * inv;
                const double dxhat = n.grad(i, j) * gamma->value(0, j);
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
            }
            mean_dxhat /= dn;
            mean_dxhat_xhat /= dn;
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (x->value(i, j) - mean) * inv;
                const double dxhat = n.grad(i, j) * gamma->value(0, j);
                if (x->needs_grad) {
                    x->grad(i, j) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
                if (gamma->needs_grad) gamma->grad(0, j) += n.grad(i, j) * xhat;
                if (beta->needs_grad) beta->grad(0, j) += n.grad(i, j);
            }
        }
    });
}

NodeRef concat_rows(const NodeRef& a, const NodeRef& b) {
    check_same_tape(a, b);
    Matrix2D v = mkgc::concat_rows(a->value, b->value);
    const std::size_t split = a->value.rows;
    return tape_of(a)->make(std::move(v), {a, b}, [split](Node& n) {
        const NodeRef& a = n.parents[0];
        const NodeRef& b = n.parents[1];
        if (a->needs_grad) add_inplace(a->grad, mkgc::slice_rows(n.grad, 0, split));
        if (b->needs_grad) add_inplace(b->grad, mkgc::slice_rows(n.grad, split, n.grad.rows));
    });
}

NodeRef concat_cols(const std::vector<NodeRef>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: no parts");
    std::vector<Matrix2D> vals;
    vals.reserve(parts.size());
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        check_same_tape(parts[0], p);
        vals.push_back(p->value);
        widths.push_back(p->value.cols);
    }
    Matrix2D v = mkgc::concat_cols(vals);
    return tape_of(parts[0])->make(std::move(v), parts, [widths](Node& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            const NodeRef& p = n.parents[k];
            if (p->needs_grad) {
                for (std::size_t i = 0; i < p->grad.rows; ++i) {
                    for (std::size_t j = 0; j < widths[k]; ++j) {
                        p->grad(i, j) += n.grad(i, off + j);
                    }
                }
            }
            off += widths[k];
        }
    });
}

NodeRef slice_rows(const NodeRef& a, std::size_t r0, std::size_t r1) {
    Matrix2D v = mkgc::slice_rows(a->value, r0, r1);
    return tape_of(a)->make(std::move(v), {a}, [r0](Node& n) {
        const NodeRef& a = n.parents[0];
        if (!a->needs_grad) return;
        for (std::size_t i = 0; i < n.grad.rows; ++i) {
            for (std::size_t j = 0; j < n.grad.cols; ++j) {
                a->grad(r0 + i, j) += n.grad(i, j);
            }
        }
    });
}

NodeRef pick_row(const NodeRef& a, std::size_t i) {
    return slice_rows(a, i, i + 1);
}

NodeRef gather_rows2(const NodeRef& tab_a, const NodeRef& tab_b, const std::vector<int>& ids) {
    check_same_tape(tab_a, tab_b);
    const std::size_t na = tab_a->value.rows;
    const std::size_t nb = tab_b->value.rows;
    if (tab_a->value.cols != tab_b->value.cols) throw shape_error("gather_rows2: width mismatch");
    Matrix2D v(ids.size(), tab_a->value.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= na + nb) {
            throw vocab_error("token id " + std::to_string(id) + " out of range");
        }
        const Matrix2D& src = static_cast<std::size_t>(id) < na ? tab_a->value : tab_b->value;
        const std::size_t row = static_cast<std::size_t>(id) < na ? static_cast<std::size_t>(id)
                                                                  : static_cast<std::size_t>(id) - na;
        for (std::size_t j = 0; j < v.cols; ++j) v(i, j) = src(row, j);
    }
    return tape_of(tab_a)->make(std::move(v), {tab_a, tab_b}, [ids, na](Node& n) {
        const NodeRef& a = n.parents[0];
        const NodeRef& b = n.parents[1];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t id = static_cast<std::size_t>(ids[i]);
            if (id < na) {
                if (!a->needs_grad) continue;
                for (std::size_t j = 0; j < n.grad.cols; ++j) a->grad(id, j) += n.grad(i, j);
            } else {
                if (!b->needs_grad) continue;
                for (std::size_t j = 0; j < n.grad.cols; ++j) b->grad(id - na, j) += n.grad(i, j);
            }
        }
    });
}

NodeRef cross_entropy_loss(const NodeRef& logits_row, int target) {
    const Matrix2D& lg = logits_row->value;
    if (lg.rows != 1) throw shape_error("cross_entropy_loss: expected a single logits row");
    if (target < 0 || static_cast<std::size_t>(target) >= lg.cols) {
        throw value_error("cross_entropy_loss: target out of range");
    }
    Matrix2D v(1, 1);
    v(0, 0) = mkgc::cross_entropy(lg, {target});
    return tape_of(logits_row)->make(std::move(v), {logits_row}, [target](Node& n) {
        const NodeRef& l = n.parents[0];
        if (!l->needs_grad) return;
        const double g = n.grad(0, 0);
        Matrix2D p = mkgc::softmax_rows(l->value);
        p(0, static_cast<std::size_t>(target)) -= 1.0;
        for (std::size_t j = 0; j < p.cols; ++j) l->grad(0, j) += g * p(0, j);
    });
}

NodeRef bce_multilabel_loss(const NodeRef& logits_row, const std::vector<double>& targets01) {
    const Matrix2D& lg = logits_row->value;
    if (lg.rows != 1 || targets01.size() != lg.cols) {
        throw shape_error("bce_multilabel_loss: logits/targets mismatch");
    }
    Matrix2D t(1, lg.cols);
    t.data.assign(targets01.begin(), targets01.end());
    Matrix2D v(1, 1);
    v(0, 0) = mkgc::bce_multilabel(lg, t);
    return tape_of(logits_row)->make(std::move(v), {logits_row}, [targets01](Node& n) {
        const NodeRef& l = n.parents[0];
        if (!l->needs_grad) return;
        const double g = n.grad(0, 0) / static_cast<double>(targets01.size());
        for (std::size_t j = 0; j < l->value.cols; ++j) {
            l->grad(0, j) += g * (mkgc::sigmoid(l->value(0, j)) - targets01[j]);
        }
    });
}

NodeRef sum_scalars(const std::vector<NodeRef>& scalars) {
    if (scalars.empty()) throw shape_error("sum_scalars: empty");
    Matrix2D v(1, 1);
    for (const auto& s : scalars) {
        check_same_tape(scalars[0], s);
        if (s->value.rows != 1 || s->value.cols != 1) throw shape_error("sum_scalars: non-scalar");
        v(0, 0) += s->value(0, 0);
    }
    return tape_of(scalars[0])->make(std::move(v), scalars, [](Node& n) {
        for (const auto& p : n.parents) {
            if (p->needs_grad) p->grad(0, 0) += n.grad(0, 0);
        }
    });
}

NodeRef half_sum_squares(const NodeRef& a) {
    Matrix2D v(1, 1);
    for (double x : a->value.data) v(0, 0) += 0.5 * x * x;
    return tape_of(a)->make(std::move(v), {a}, [](Node& n) {
        const NodeRef& a = n.parents[0];
        if (!a->needs_grad) return;
        const double g = n.grad(0, 0);
        for (std::size_t i = 0; i < a->value.data.size(); ++i) {
            a->grad.data[i] += g * a->value.data[i];
        }
    });
}

} // namespace mkgc::ad
