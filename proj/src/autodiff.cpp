#include "metarx/autodiff.hpp"

namespace metarx::ad {

const char* Tape::op_name(Op o) {
    switch (o) {
        case Op::Const: return "const";
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Neg: return "neg";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::AddC: return "addc";
        case Op::MulC: return "mulc";
        case Op::MaxC: return "maxc";
        case Op::MinC: return "minc";
        case Op::Dot: return "dot";
        case Op::Sum: return "sum";
        case Op::MaxReduce: return "max";
        case Op::LogSumExp: return "logsumexp";
    }
    return "?";
}

void Tape::recompute() {
    const std::size_t n = op_.size();
    for (std::size_t i = 0; i < n; ++i) {
        double v = val_[i];
        switch (op_[i]) {
            case Op::Const:
            case Op::Leaf: continue;  // leaves keep their current values
            case Op::Add: v = val_[a_[i]] + val_[b_[i]]; break;
            case Op::Sub: v = val_[a_[i]] - val_[b_[i]]; break;
            case Op::Mul: v = val_[a_[i]] * val_[b_[i]]; break;
            case Op::Neg: v = -val_[a_[i]]; break;
            case Op::Exp: v = std::exp(val_[a_[i]]); break;
            case Op::Log: v = std::log(val_[a_[i]]); break;
            case Op::Tanh: v = std::tanh(val_[a_[i]]); break;
            case Op::Relu: v = val_[a_[i]] > 0 ? val_[a_[i]] : 0.0; break;
            case Op::AddC: v = val_[a_[i]] + aux_[i]; break;
            case Op::MulC: v = val_[a_[i]] * aux_[i]; break;
            case Op::MaxC: v = val_[a_[i]] > aux_[i] ? val_[a_[i]] : aux_[i]; break;
            case Op::MinC: v = val_[a_[i]] < aux_[i] ? val_[a_[i]] : aux_[i]; break;
            case Op::Dot: {
                const std::int32_t s = a_[i], k = b_[i];
                v = 0.0;
                for (std::int32_t j = 0; j < k; ++j)
                    v += val_[pool_[s + j]] * val_[pool_[s + k + j]];
                break;
            }
            case Op::Sum: {
                const std::int32_t s = a_[i], k = b_[i];
                v = 0.0;
                for (std::int32_t j = 0; j < k; ++j) v += val_[pool_[s + j]];
                break;
            }
            case Op::MaxReduce: {
                const std::int32_t s = a_[i], k = b_[i];
                std::int32_t arg = 0;
                v = val_[pool_[s]];
                for (std::int32_t j = 1; j < k; ++j)
                    if (val_[pool_[s + j]] > v) { v = val_[pool_[s + j]]; arg = j; }
                aux_[i] = static_cast<double>(arg);
                break;
            }
            case Op::LogSumExp: {
                const std::int32_t s = a_[i], k = b_[i];
                double m = val_[pool_[s]];
                for (std::int32_t j = 1; j < k; ++j) m = std::max(m, val_[pool_[s + j]]);
                double acc = 0.0;
                for (std::int32_t j = 0; j < k; ++j) acc += std::exp(val_[pool_[s + j]] - m);
                v = m + std::log(acc);
                break;
            }
        }
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in op ") + op_name(op_[i]) +
                                   " at node " + std::to_string(i),
                               static_cast<std::int32_t>(i));
        val_[i] = v;
    }
}

Eigen::VectorXd Tape::gradient(const Var& out, std::span<const Var> leaves) {
    if (out.is_const() || out.tape() != this)
        throw std::invalid_argument("gradient: output is not a node of this tape");
    const std::int32_t n = out.index() + 1;
    std::vector<double> adj(static_cast<std::size_t>(n), 0.0);
    adj[out.index()] = 1.0;
    for (std::int32_t i = n - 1; i >= 0; --i) {
        const double g = adj[i];
        if (g == 0.0) continue;
        switch (op_[i]) {
            case Op::Const:
            case Op::Leaf: break;
            case Op::Add:
                adj[a_[i]] += g;
                adj[b_[i]] += g;
                break;
            case Op::Sub:
                adj[a_[i]] += g;
                adj[b_[i]] -= g;
                break;
            case Op::Mul:
                adj[a_[i]] += g * val_[b_[i]];
                adj[b_[i]] += g * val_[a_[i]];
                break;
            case Op::Neg: adj[a_[i]] -= g; break;
            case Op::Exp: adj[a_[i]] += g * val_[i]; break;
            case Op::Log: adj[a_[i]] += g / val_[a_[i]]; break;
            case Op::Tanh: adj[a_[i]] += g * (1.0 - val_[i] * val_[i]); break;
            case Op::Relu:
                if (val_[a_[i]] > 0) adj[a_[i]] += g;
                break;
            case Op::AddC: adj[a_[i]] += g; break;
            case Op::MulC: adj[a_[i]] += g * aux_[i]; break;
            case Op::MaxC:
                if (val_[a_[i]] >= aux_[i]) adj[a_[i]] += g;
                break;
            case Op::MinC:
                if (val_[a_[i]] <= aux_[i]) adj[a_[i]] += g;
                break;
            case Op::Dot: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j) {
                    adj[pool_[s + j]] += g * val_[pool_[s + k + j]];
                    adj[pool_[s + k + j]] += g * val_[pool_[s + j]];
                }
                break;
            }
            case Op::Sum: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j) adj[pool_[s + j]] += g;
                break;
            }
            case Op::MaxReduce: {
                const std::int32_t s = a_[i];
                adj[pool_[s + static_cast<std::int32_t>(aux_[i])]] += g;
                break;
            }
            case Op::LogSumExp: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j)
                    adj[pool_[s + j]] += g * std::exp(val_[pool_[s + j]] - val_[i]);
                break;
            }
        }
    }
    Eigen::VectorXd out_grad(static_cast<Eigen::Index>(leaves.size()));
    for (std::size_t d = 0; d < leaves.size(); ++d) {
        const Var& l = leaves[d];
        if (l.is_const() || l.tape() != this)
            throw std::invalid_argument("gradient: leaf is not a node of this tape");
        out_grad[static_cast<Eigen::Index>(d)] = l.index() < n ? adj[l.index()] : 0.0;
    }
    return out_grad;
}

std::vector<Var> Tape::gradient_nodes(const Var& out, std::span<const Var> leaves) {
    if (out.is_const() || out.tape() != this)
        throw std::invalid_argument("gradient_nodes: output is not a node of this tape");
    const std::int32_t n = out.index() + 1;
    // adjoint node id per original node; -1 = structural zero
    std::vector<std::int32_t> adj(static_cast<std::size_t>(n), -1);
    const std::int32_t one = push0(Op::Const, 1.0, 1.0);
    adj[out.index()] = one;

    auto acc = [&](std::int32_t target, const Var& term) {
        if (op_[target] == Op::Const) return;  // constants absorb nothing
        if (term.is_const())
            throw std::logic_error("gradient_nodes: constant adjoint term");
        if (adj[target] < 0) {
            adj[target] = term.index();
        } else {
            Var s = add(Var(this, adj[target], val_[adj[target]]), term);
            adj[target] = s.index();
        }
    };
    auto var_at = [&](std::int32_t i) { return Var(this, i, val_[i]); };

    for (std::int32_t i = n - 1; i >= 0; --i) {
        if (adj[i] < 0) continue;
        const Var g = var_at(adj[i]);
        switch (op_[i]) {
            case Op::Const:
            case Op::Leaf: break;
            case Op::Add:
                acc(a_[i], g);
                acc(b_[i], g);
                break;
            case Op::Sub:
                acc(a_[i], g);
                acc(b_[i], neg(g));
                break;
            case Op::Mul:
                acc(a_[i], mul(g, var_at(b_[i])));
                acc(b_[i], mul(g, var_at(a_[i])));
                break;
            case Op::Neg: acc(a_[i], neg(g)); break;
            case Op::Exp: acc(a_[i], mul(g, var_at(i))); break;
            case Op::Log:
                // 1/a for a > 0 expressed through the existing log node
                acc(a_[i], mul(g, exp_(neg(var_at(i)))));
                break;
            case Op::Tanh: {
                Var t = var_at(i);
                acc(a_[i], mul(g, addc(neg(mul(t, t)), 1.0)));
                break;
            }
            case Op::Relu:
                if (val_[a_[i]] > 0) acc(a_[i], g);  // subgradient 0 at the kink
                break;
            case Op::AddC: acc(a_[i], g); break;
            case Op::MulC: acc(a_[i], mulc(g, aux_[i])); break;
            case Op::MaxC:
                if (val_[a_[i]] >= aux_[i]) acc(a_[i], g);
                break;
            case Op::MinC:
                if (val_[a_[i]] <= aux_[i]) acc(a_[i], g);
                break;
            case Op::Dot: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j) {
                    const std::int32_t lj = pool_[s + j], rj = pool_[s + k + j];
                    if (op_[lj] != Op::Const) {
                        if (op_[rj] == Op::Const) {
                            if (val_[rj] != 0.0) acc(lj, mulc(g, val_[rj]));
                        } else {
                            acc(lj, mul(g, var_at(rj)));
                        }
                    }
                    if (op_[rj] != Op::Const) {
                        if (op_[lj] == Op::Const) {
                            if (val_[lj] != 0.0) acc(rj, mulc(g, val_[lj]));
                        } else {
                            acc(rj, mul(g, var_at(lj)));
                        }
                    }
                }
                break;
            }
            case Op::Sum: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j) acc(pool_[s + j], g);
                break;
            }
            case Op::MaxReduce: {
                const std::int32_t s = a_[i];
                acc(pool_[s + static_cast<std::int32_t>(aux_[i])], g);
                break;
            }
            case Op::LogSumExp: {
                const std::int32_t s = a_[i], k = b_[i];
                for (std::int32_t j = 0; j < k; ++j) {
                    const std::int32_t xj = pool_[s + j];
                    if (op_[xj] == Op::Const) continue;
                    Var w = exp_(sub(var_at(xj), var_at(i)));
                    acc(xj, mul(g, w));
                }
                break;
            }
        }
    }

    std::vector<Var> result;
    result.reserve(leaves.size());
    for (const Var& l : leaves) {
        if (l.is_const() || l.tape() != this)
            throw std::invalid_argument("gradient_nodes: leaf is not a node of this tape");
        if (l.index() < n && adj[l.index()] >= 0)
            result.push_back(var_at(adj[l.index()]));
        else
            result.push_back(var_at(push0(Op::Const, 0.0, 0.0)));
    }
    return result;
}

GradResult grad(const ScalarFn& f, const Eigen::VectorXd& theta) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index d = 0; d < theta.size(); ++d) leaves.push_back(tape.leaf(theta[d]));
    Var out = f(tape, leaves);
    if (out.is_const())  // constant functions have an identically zero gradient
        return GradResult{out.value(), Eigen::VectorXd::Zero(theta.size())};
    return GradResult{out.value(), tape.gradient(out, leaves)};
}

GradResult grad_nested(const ScalarFn& f, const Eigen::VectorXd& theta) {
    return grad(f, theta);
}

}  // namespace metarx::ad
