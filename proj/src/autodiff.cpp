#include "gnfr/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cassert>
#include <unordered_set>

namespace gnfr::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

Var make_param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

namespace {

Var make_op(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (grad_enabled()) {
        bool any = false;
        for (auto& p : parents)
            if (p->requires_grad) any = true;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(bw);
        }
    }
    return n;
}

}  // namespace

void backward(const Var& loss) {
    assert(loss->val.numel() == 1);
    // iterative post-order topo sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.get(), 0});
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && visited.count(node)) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Node* child = node->parents[idx].get();
            ++idx;
            if (!visited.count(child) && child->requires_grad) stack.push_back({child, 0});
        } else {
            if (!visited.count(node)) {
                visited.insert(node);
                order.push_back(node);
            }
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// --- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] += b->val.v[i];
    Node *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        if (pb->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    });
}

Var sub(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] -= b->val.v[i];
    Node *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        if (pb->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] *= b->val.v[i];
    Node *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->val.v[i];
        if (pb->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->val.v[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= s;
    Node* pa = a.get();
    return make_op(std::move(out), {a}, [pa, s](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->val;
    for (auto& x : out.v) x += s;
    Node* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x > 0.0 ? x : 0.0;
    Node* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (self.val.v[i] > 0.0) pa->grad[i] += self.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    Node* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double s = self.val.v[i];
            pa->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

// --- dense -----------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
    int din = w->val.dim(0), dout = w->val.dim(1);
    int rows = static_cast<int>(x->val.numel()) / din;
    Tensor out({rows, dout});
    {
        CMapMat X(x->val.v.data(), rows, din);
        CMapMat W(w->val.v.data(), din, dout);
        MapMat O(out.v.data(), rows, dout);
        O.noalias() = X * W;
        if (b) {
            CMapMat B(b->val.v.data(), 1, dout);
            O.rowwise() += B.row(0);
        }
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    Node *px = x.get(), *pw = w.get(), *pb = b ? b.get() : nullptr;
    return make_op(std::move(out), std::move(parents), [px, pw, pb, rows, din, dout](Node& self) {
        CMapMat G(self.grad.data(), rows, dout);
        if (px->requires_grad) {
            CMapMat W(pw->val.v.data(), din, dout);
            MapMat GX(px->grad.data(), rows, din);
            GX.noalias() += G * W.transpose();
        }
        if (pw->requires_grad) {
            CMapMat X(px->val.v.data(), rows, din);
            MapMat GW(pw->grad.data(), din, dout);
            GW.noalias() += X.transpose() * G;
        }
        if (pb && pb->requires_grad) {
            MapMat GB(pb->grad.data(), 1, dout);
            GB.row(0) += G.colwise().sum();
        }
    });
}

Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
    int d = gamma->val.dim(0);
    int rows = static_cast<int>(x->val.numel()) / d;
    Tensor out({rows, d});
    // cache normalized values and inverse std per row for backward
    auto xhat = std::make_shared<std::vector<double>>(x->val.numel());
    auto istd = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.v.data() + static_cast<size_t>(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        (*istd)[r] = is;
        for (int j = 0; j < d; ++j) {
            double h = (xr[j] - mean) * is;
            (*xhat)[static_cast<size_t>(r) * d + j] = h;
            out.v[static_cast<size_t>(r) * d + j] = h * gamma->val.v[j] + beta->val.v[j];
        }
    }
    Node *px = x.get(), *pg = gamma.get(), *pb = beta.get();
    return make_op(std::move(out), {x, gamma, beta}, [px, pg, pb, rows, d, xhat, istd](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + static_cast<size_t>(r) * d;
            const double* h = xhat->data() + static_cast<size_t>(r) * d;
            if (pg->requires_grad || pb->requires_grad) {
                for (int j = 0; j < d; ++j) {
                    if (pg->requires_grad) pg->grad[j] += g[j] * h[j];
                    if (pb->requires_grad) pb->grad[j] += g[j];
                }
            }
            if (px->requires_grad) {
                // dL/dxhat_j = g_j * gamma_j
                double sum_gh = 0.0, sum_ghh = 0.0;
                for (int j = 0; j < d; ++j) {
                    double gh = g[j] * pg->val.v[j];
                    sum_gh += gh;
                    sum_ghh += gh * h[j];
                }
                double* gx = px->grad.data() + static_cast<size_t>(r) * d;
                double is = (*istd)[r];
                for (int j = 0; j < d; ++j) {
                    double gh = g[j] * pg->val.v[j];
                    gx[j] += is * (gh - sum_gh / d - h[j] * sum_ghh / d);
                }
            }
        }
    });
}

Var softmax_rows(const Var& x, int cols) {
    int rows = static_cast<int>(x->val.numel()) / cols;
    Tensor out({rows, cols});
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.v.data() + static_cast<size_t>(r) * cols;
        double* o = out.v.data() + static_cast<size_t>(r) * cols;
        double mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (int j = 0; j < cols; ++j) {
            o[j] = std::exp(xr[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < cols; ++j) o[j] /= s;
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + static_cast<size_t>(r) * cols;
            const double* p = self.val.v.data() + static_cast<size_t>(r) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += g[j] * p[j];
            double* gx = px->grad.data() + static_cast<size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) gx[j] += p[j] * (g[j] - dot);
        }
    });
}

Var masked_renorm_rows(const Var& prob, int cols, const std::vector<double>& keep,
                       const std::vector<double>& fallback, bool renormalize) {
    int rows = static_cast<int>(prob->val.numel()) / cols;
    Tensor out({rows, cols});
    auto keep_p = std::make_shared<std::vector<double>>(keep);
    auto sums = std::make_shared<std::vector<double>>(rows, 1.0);
    auto degen = std::make_shared<std::vector<char>>(rows, 0);
    for (int r = 0; r < rows; ++r) {
        const double* p = prob->val.v.data() + static_cast<size_t>(r) * cols;
        const double* k = keep.data() + static_cast<size_t>(r) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += p[j] * k[j];
        double* o = out.v.data() + static_cast<size_t>(r) * cols;
        if (s < 1e-300) {
            (*degen)[r] = 1;
            const double* f = fallback.data() + static_cast<size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) o[j] = f[j];
        } else {
            double inv = renormalize ? 1.0 / s : 1.0;
            (*sums)[r] = s;
            for (int j = 0; j < cols; ++j) o[j] = p[j] * k[j] * inv;
        }
    }
    Node* pp = prob.get();
    return make_op(std::move(out), {prob},
                   [pp, rows, cols, keep_p, sums, degen, renormalize](Node& self) {
                       for (int r = 0; r < rows; ++r) {
                           if ((*degen)[r]) continue;  // fallback rows are constant
                           const double* g = self.grad.data() + static_cast<size_t>(r) * cols;
                           const double* k = keep_p->data() + static_cast<size_t>(r) * cols;
                           const double* o = self.val.v.data() + static_cast<size_t>(r) * cols;
                           double* gp = pp->grad.data() + static_cast<size_t>(r) * cols;
                           double s = (*sums)[r];
                           if (!renormalize) {
                               for (int j = 0; j < cols; ++j) gp[j] += g[j] * k[j];
                           } else {
                               double dot = 0.0;
                               for (int j = 0; j < cols; ++j) dot += g[j] * o[j];
                               // out_j = p_j k_j / s, ds/dp_j = k_j
                               for (int j = 0; j < cols; ++j)
                                   gp[j] += k[j] * (g[j] - dot) / s;
                           }
                       }
                   });
}

Var attn_scores(const Var& q, const Var& k, int groups, int tq, int tk, int dh, double scl) {
    Tensor out({groups, tq, tk});
    for (int g = 0; g < groups; ++g) {
        CMapMat Q(q->val.v.data() + static_cast<size_t>(g) * tq * dh, tq, dh);
        CMapMat K(k->val.v.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
        MapMat O(out.v.data() + static_cast<size_t>(g) * tq * tk, tq, tk);
        O.noalias() = scl * (Q * K.transpose());
    }
    Node *pq = q.get(), *pk = k.get();
    return make_op(std::move(out), {q, k}, [pq, pk, groups, tq, tk, dh, scl](Node& self) {
        for (int g = 0; g < groups; ++g) {
            CMapMat G(self.grad.data() + static_cast<size_t>(g) * tq * tk, tq, tk);
            if (pq->requires_grad) {
                CMapMat K(pk->val.v.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
                MapMat GQ(pq->grad.data() + static_cast<size_t>(g) * tq * dh, tq, dh);
                GQ.noalias() += scl * (G * K);
            }
            if (pk->requires_grad) {
                CMapMat Q(pq->val.v.data() + static_cast<size_t>(g) * tq * dh, tq, dh);
                MapMat GK(pk->grad.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
                GK.noalias() += scl * (G.transpose() * Q);
            }
        }
    });
}

Var attn_apply(const Var& w, const Var& v, int groups, int tq, int tk, int dh) {
    Tensor out({groups, tq, dh});
    for (int g = 0; g < groups; ++g) {
        CMapMat W(w->val.v.data() + static_cast<size_t>(g) * tq * tk, tq, tk);
        CMapMat V(v->val.v.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
        MapMat O(out.v.data() + static_cast<size_t>(g) * tq * dh, tq, dh);
        O.noalias() = W * V;
    }
    Node *pw = w.get(), *pv = v.get();
    return make_op(std::move(out), {w, v}, [pw, pv, groups, tq, tk, dh](Node& self) {
        for (int g = 0; g < groups; ++g) {
            CMapMat G(self.grad.data() + static_cast<size_t>(g) * tq * dh, tq, dh);
            if (pw->requires_grad) {
                CMapMat V(pv->val.v.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
                MapMat GW(pw->grad.data() + static_cast<size_t>(g) * tq * tk, tq, tk);
                GW.noalias() += G * V.transpose();
            }
            if (pv->requires_grad) {
                CMapMat W(pw->val.v.data() + static_cast<size_t>(g) * tq * tk, tq, tk);
                MapMat GV(pv->grad.data() + static_cast<size_t>(g) * tk * dh, tk, dh);
                GV.noalias() += W.transpose() * G;
            }
        }
    });
}

Var permute_gather(const Var& x, const std::shared_ptr<std::vector<int64_t>>& idx,
                   std::vector<int> out_shape) {
    Tensor out(std::move(out_shape));
    assert(out.numel() == idx->size());
    for (size_t i = 0; i < out.numel(); ++i) {
        int64_t j = (*idx)[i];
        out.v[i] = j >= 0 ? x->val.v[j] : 0.0;
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, idx](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            int64_t j = (*idx)[i];
            if (j >= 0) px->grad[j] += self.grad[i];
        }
    });
}

Var gather_rows(const Var& x, const std::shared_ptr<RowTaps>& taps, int cols) {
    int rows = static_cast<int>(taps->offsets.size()) - 1;
    Tensor out({rows, cols});
    for (int r = 0; r < rows; ++r) {
        double* o = out.v.data() + static_cast<size_t>(r) * cols;
        for (int t = taps->offsets[r]; t < taps->offsets[r + 1]; ++t) {
            const double* src = x->val.v.data() + static_cast<size_t>(taps->cells[t]) * cols;
            double w = taps->wts[t];
            for (int c = 0; c < cols; ++c) o[c] += w * src[c];
        }
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, taps, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + static_cast<size_t>(r) * cols;
            for (int t = taps->offsets[r]; t < taps->offsets[r + 1]; ++t) {
                double* dst = px->grad.data() + static_cast<size_t>(taps->cells[t]) * cols;
                double w = taps->wts[t];
                for (int c = 0; c < cols; ++c) dst[c] += w * g[c];
            }
        }
    });
}

Var mean_groups(const Var& x, int group_size, int cols) {
    int total_rows = static_cast<int>(x->val.numel()) / cols;
    int groups = total_rows / group_size;
    Tensor out({groups, cols});
    double inv = 1.0 / group_size;
    for (int g = 0; g < groups; ++g) {
        double* o = out.v.data() + static_cast<size_t>(g) * cols;
        for (int m = 0; m < group_size; ++m) {
            const double* src =
                x->val.v.data() + (static_cast<size_t>(g) * group_size + m) * cols;
            for (int c = 0; c < cols; ++c) o[c] += inv * src[c];
        }
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, groups, group_size, cols, inv](Node& self) {
        for (int g = 0; g < groups; ++g) {
            const double* gr = self.grad.data() + static_cast<size_t>(g) * cols;
            for (int m = 0; m < group_size; ++m) {
                double* dst = px->grad.data() + (static_cast<size_t>(g) * group_size + m) * cols;
                for (int c = 0; c < cols; ++c) dst[c] += inv * gr[c];
            }
        }
    });
}

Var sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x->val.v) s += v;
    Tensor out({1});
    out.v[0] = s;
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px](Node& self) {
        double g = self.grad[0];
        for (auto& gv : px->grad) gv += g;
    });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x->val.numel())); }

Var masked_mse(const Var& pred, const std::vector<double>& target,
               const std::vector<double>& keep_row, int cols) {
    int rows = static_cast<int>(pred->val.numel()) / cols;
    int n_keep = 0;
    for (int r = 0; r < rows; ++r)
        if (keep_row[r] > 0.5) ++n_keep;
    Tensor out({1});
    auto keep = std::make_shared<std::vector<double>>(keep_row);
    auto tgt = std::make_shared<std::vector<double>>(target);
    double denom = n_keep > 0 ? static_cast<double>(n_keep) * cols : 1.0;
    double s = 0.0;
    for (int r = 0; r < rows; ++r) {
        if (keep_row[r] <= 0.5) continue;
        for (int c = 0; c < cols; ++c) {
            double d = pred->val.v[static_cast<size_t>(r) * cols + c] -
                       target[static_cast<size_t>(r) * cols + c];
            s += d * d;
        }
    }
    out.v[0] = n_keep > 0 ? s / denom : 0.0;
    Node* pp = pred.get();
    return make_op(std::move(out), {pred}, [pp, keep, tgt, rows, cols, denom, n_keep](Node& self) {
        if (n_keep == 0) return;
        double g = self.grad[0];
        for (int r = 0; r < rows; ++r) {
            if ((*keep)[r] <= 0.5) continue;
            for (int c = 0; c < cols; ++c) {
                size_t i = static_cast<size_t>(r) * cols + c;
                pp->grad[i] += g * 2.0 * (pp->val.v[i] - (*tgt)[i]) / denom;
            }
        }
    });
}

Var weighted_bce_logits(const Var& logits, const std::vector<double>& target, double w_pos,
                        double w_neg) {
    size_t n = logits->val.numel();
    auto tgt = std::make_shared<std::vector<double>>(target);
    auto sig = std::make_shared<std::vector<double>>(n);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double z = logits->val.v[i];
        double p = 1.0 / (1.0 + std::exp(-z));
        p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
        (*sig)[i] = p;
        double t = target[i];
        s -= w_pos * t * std::log(p) + w_neg * (1.0 - t) * std::log(1.0 - p);
    }
    Tensor out({1});
    out.v[0] = s / static_cast<double>(n);
    Node* pl = logits.get();
    return make_op(std::move(out), {logits}, [pl, tgt, sig, n, w_pos, w_neg](Node& self) {
        double g = self.grad[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            double p = (*sig)[i], t = (*tgt)[i];
            // d/dz of -(w1 t log p + w0 (1-t) log(1-p)), p = sigmoid(z)
            pl->grad[i] += g * (w_neg * (1.0 - t) * p - w_pos * t * (1.0 - p));
        }
    });
}

}  // namespace gnfr::nn
