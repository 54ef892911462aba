#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metarx::ad {

class Tape;

// Raised when a node evaluates to a non-finite value. `node` identifies the
// offending tape entry.
struct NumericError : std::runtime_error {
    std::int32_t node;
    NumericError(const std::string& msg, std::int32_t node_index)
        : std::runtime_error(msg), node(node_index) {}
};

enum class Op : std::uint8_t {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Exp,
    Log,
    Tanh,
    Relu,
    AddC,  // x + aux
    MulC,  // x * aux
    MaxC,  // max(x, aux)
    MinC,  // min(x, aux)
    Dot,        // pool holds k lhs ids then k rhs ids
    Sum,        // pool holds k ids
    MaxReduce,  // pool holds k ids; aux caches argmax position
    LogSumExp,  // pool holds k ids
};

// Handle to a tape node. A default/double-constructed Var is a detached
// constant (no tape); arithmetic between detached constants folds eagerly
// and never touches a tape.
class Var {
  public:
    Var() = default;
    Var(double v) : val_(v) {}  // NOLINT: implicit by design
    Var(Tape* tape, std::int32_t index, double value)
        : tape_(tape), idx_(index), val_(value) {}

    double value() const { return val_; }
    Tape* tape() const { return tape_; }
    std::int32_t index() const { return idx_; }
    bool is_const() const { return tape_ == nullptr; }

    Var& operator+=(const Var& o);
    Var& operator-=(const Var& o);
    Var& operator*=(const Var& o);

  private:
    Tape* tape_ = nullptr;
    std::int32_t idx_ = -1;
    double val_ = 0.0;
};

struct GradResult {
    double value = 0.0;
    Eigen::VectorXd grad;
};

// Append-only expression tape. Values are computed eagerly at construction;
// `recompute()` re-evaluates the whole graph from the current leaf values.
// Two reverse sweeps are provided: `gradient` accumulates plain doubles (the
// outermost derivative), while `gradient_nodes` emits the backward pass as
// new tape nodes so the result can itself be differentiated (nested grads,
// Hessian-vector products, meta-gradients).
class Tape {
  public:
    Var leaf(double v) { return Var(this, push0(Op::Leaf, v, v), v); }

    Var constant(double v) { return Var(this, push0(Op::Const, v, v), v); }

    std::size_t size() const { return op_.size(); }

    void clear() {
        op_.clear();
        a_.clear();
        b_.clear();
        val_.clear();
        aux_.clear();
        pool_.clear();
    }

    double value(std::int32_t i) const { return val_[i]; }

    void set_leaf(const Var& v, double x) {
        if (v.tape() != this || op_[v.index()] != Op::Leaf)
            throw std::invalid_argument("set_leaf: not a leaf of this tape");
        val_[v.index()] = x;
    }

    // ---- node builders (constant-fold when every operand is detached) ----

    Var add(Var a, Var b) {
        if (a.is_const() && b.is_const()) return Var(a.value() + b.value());
        if (a.is_const()) return addc(b, a.value());
        if (b.is_const()) return addc(a, b.value());
        return make2(Op::Add, a, b, a.value() + b.value());
    }

    Var sub(Var a, Var b) {
        if (a.is_const() && b.is_const()) return Var(a.value() - b.value());
        if (b.is_const()) return addc(a, -b.value());
        if (a.is_const()) return addc(neg(b), a.value());
        return make2(Op::Sub, a, b, a.value() - b.value());
    }

    Var mul(Var a, Var b) {
        if (a.is_const() && b.is_const()) return Var(a.value() * b.value());
        if (a.is_const()) return mulc(b, a.value());
        if (b.is_const()) return mulc(a, b.value());
        return make2(Op::Mul, a, b, a.value() * b.value());
    }

    Var neg(Var a) {
        if (a.is_const()) return Var(-a.value());
        return make1(Op::Neg, a, -a.value());
    }

    Var exp_(Var a) {
        if (a.is_const()) return Var(std::exp(a.value()));
        return make1(Op::Exp, a, std::exp(a.value()));
    }

    Var log_(Var a) {
        if (a.is_const()) return Var(std::log(a.value()));
        return make1(Op::Log, a, std::log(a.value()));
    }

    Var tanh_(Var a) {
        if (a.is_const()) return Var(std::tanh(a.value()));
        return make1(Op::Tanh, a, std::tanh(a.value()));
    }

    Var relu(Var a) {
        if (a.is_const()) return Var(a.value() > 0 ? a.value() : 0.0);
        return make1(Op::Relu, a, a.value() > 0 ? a.value() : 0.0);
    }

    Var addc(Var a, double c) {
        if (c == 0.0) return a;
        if (a.is_const()) return Var(a.value() + c);
        return make1aux(Op::AddC, a, c, a.value() + c);
    }

    Var mulc(Var a, double c) {
        if (a.is_const()) return Var(a.value() * c);
        if (c == 1.0) return a;
        return make1aux(Op::MulC, a, c, a.value() * c);
    }

    Var maxc(Var a, double c) {
        if (a.is_const()) return Var(a.value() > c ? a.value() : c);
        return make1aux(Op::MaxC, a, c, a.value() > c ? a.value() : c);
    }

    Var minc(Var a, double c) {
        if (a.is_const()) return Var(a.value() < c ? a.value() : c);
        return make1aux(Op::MinC, a, c, a.value() < c ? a.value() : c);
    }

    Var clamp(Var a, double lo, double hi) { return minc(maxc(a, lo), hi); }

    // Pass-through node: value and derivative of `a`, but a distinct node,
    // so gradients can be taken w.r.t. the copy without touching other
    // appearances of `a` in the graph.
    Var identity(Var a) {
        if (a.is_const()) return a;
        return make1aux(Op::AddC, a, 0.0, a.value());
    }

    Var dot(std::span<const Var> a, std::span<const Var> b) {
        if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
        const std::size_t k = a.size();
        bool any_node = false;
        double v = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            v += a[j].value() * b[j].value();
            any_node = any_node || !a[j].is_const() || !b[j].is_const();
        }
        if (!any_node) return Var(v);
        auto start = static_cast<std::int32_t>(pool_.size());
        pool_.reserve(pool_.size() + 2 * k);
        for (std::size_t j = 0; j < k; ++j) pool_.push_back(node_id(a[j]));
        for (std::size_t j = 0; j < k; ++j) pool_.push_back(node_id(b[j]));
        return Var(this, pushn(Op::Dot, start, static_cast<std::int32_t>(k), v, 0.0), v);
    }

    Var sum(std::span<const Var> xs) {
        double v = 0.0;
        bool any_node = false;
        for (const Var& x : xs) {
            v += x.value();
            any_node = any_node || !x.is_const();
        }
        if (!any_node) return Var(v);
        auto start = intern_pool(xs);
        return Var(this, pushn(Op::Sum, start, static_cast<std::int32_t>(xs.size()), v, 0.0), v);
    }

    Var max(std::span<const Var> xs) {
        if (xs.empty()) throw std::invalid_argument("max: empty span");
        std::size_t arg = 0;
        for (std::size_t j = 1; j < xs.size(); ++j)
            if (xs[j].value() > xs[arg].value()) arg = j;
        bool any_node = false;
        for (const Var& x : xs) any_node = any_node || !x.is_const();
        if (!any_node) return Var(xs[arg].value());
        auto start = intern_pool(xs);
        return Var(this,
                   pushn(Op::MaxReduce, start, static_cast<std::int32_t>(xs.size()),
                         xs[arg].value(), static_cast<double>(arg)),
                   xs[arg].value());
    }

    Var logsumexp(std::span<const Var> xs) {
        if (xs.empty()) throw std::invalid_argument("logsumexp: empty span");
        double m = xs[0].value();
        for (const Var& x : xs) m = x.value() > m ? x.value() : m;
        double s = 0.0;
        for (const Var& x : xs) s += std::exp(x.value() - m);
        double v = m + std::log(s);
        bool any_node = false;
        for (const Var& x : xs) any_node = any_node || !x.is_const();
        if (!any_node) return Var(v);
        auto start = intern_pool(xs);
        return Var(this, pushn(Op::LogSumExp, start, static_cast<std::int32_t>(xs.size()), v, 0.0),
                   v);
    }

    // Re-evaluates every node in order from the current leaf values.
    void recompute();

    // Plain reverse sweep; returns d(out)/d(leaf) for each requested leaf.
    Eigen::VectorXd gradient(const Var& out, std::span<const Var> leaves);

    // Reverse sweep emitted as new tape nodes, one per requested leaf.
    // Branch selections (relu/max/clamp) are frozen at current values.
    std::vector<Var> gradient_nodes(const Var& out, std::span<const Var> leaves);

  private:
    friend class Var;

    std::vector<Op> op_;
    std::vector<std::int32_t> a_, b_;
    std::vector<double> val_, aux_;
    std::vector<std::int32_t> pool_;

    static const char* op_name(Op o);

    std::int32_t node_id(const Var& v) {
        if (!v.is_const()) {
            if (v.tape() != this) throw std::invalid_argument("mixing nodes from different tapes");
            return v.index();
        }
        return push0(Op::Const, v.value(), v.value());
    }

    std::int32_t check_push(Op o, std::int32_t a, std::int32_t b, double v, double aux) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in op ") + op_name(o) + " at node " +
                                   std::to_string(op_.size()),
                               static_cast<std::int32_t>(op_.size()));
        op_.push_back(o);
        a_.push_back(a);
        b_.push_back(b);
        val_.push_back(v);
        aux_.push_back(aux);
        return static_cast<std::int32_t>(op_.size() - 1);
    }

    std::int32_t push0(Op o, double v, double aux) { return check_push(o, -1, -1, v, aux); }

    Var make1(Op o, const Var& a, double v) {
        return Var(this, check_push(o, require(a), -1, v, 0.0), v);
    }

    Var make1aux(Op o, const Var& a, double aux, double v) {
        return Var(this, check_push(o, require(a), -1, v, aux), v);
    }

    Var make2(Op o, const Var& a, const Var& b, double v) {
        return Var(this, check_push(o, require(a), require(b), v, 0.0), v);
    }

    std::int32_t pushn(Op o, std::int32_t pool_start, std::int32_t count, double v, double aux) {
        return check_push(o, pool_start, count, v, aux);
    }

    std::int32_t require(const Var& v) {
        if (v.is_const() || v.tape() != this)
            throw std::invalid_argument("operand is not a node of this tape");
        return v.index();
    }

    std::int32_t intern_pool(std::span<const Var> xs) {
        auto start = static_cast<std::int32_t>(pool_.size());
        pool_.reserve(pool_.size() + xs.size());
        for (const Var& x : xs) pool_.push_back(node_id(x));
        return start;
    }
};

// ---- operator sugar -------------------------------------------------------

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) {
    Tape* t = a.tape() ? a.tape() : b.tape();
    if (a.tape() && b.tape() && a.tape() != b.tape())
        throw std::invalid_argument("mixing nodes from different tapes");
    return t;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    return t ? t->add(a, b) : Var(a.value() + b.value());
}
inline Var operator-(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    return t ? t->sub(a, b) : Var(a.value() - b.value());
}
inline Var operator*(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    return t ? t->mul(a, b) : Var(a.value() * b.value());
}
inline Var operator-(const Var& a) { return a.tape() ? a.tape()->neg(a) : Var(-a.value()); }
inline Var operator/(const Var& a, double c) {
    return a.tape() ? a.tape()->mulc(a, 1.0 / c) : Var(a.value() / c);
}

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }

inline Var exp(const Var& a) { return a.tape() ? a.tape()->exp_(a) : Var(std::exp(a.value())); }
inline Var log(const Var& a) { return a.tape() ? a.tape()->log_(a) : Var(std::log(a.value())); }
inline Var tanh(const Var& a) { return a.tape() ? a.tape()->tanh_(a) : Var(std::tanh(a.value())); }
inline Var relu(const Var& a) {
    return a.tape() ? a.tape()->relu(a) : Var(a.value() > 0 ? a.value() : 0.0);
}
inline double relu(double x) { return x > 0 ? x : 0.0; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }

// ---- convenience entry points --------------------------------------------

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Value and gradient of a scalar function of a real vector.
GradResult grad(const ScalarFn& f, const Eigen::VectorXd& theta);

// Same entry point for functions whose body contains inner `gradient_nodes`
// calls; the emitted backward graph makes the composition exactly
// differentiable (second order and beyond).
GradResult grad_nested(const ScalarFn& f, const Eigen::VectorXd& theta);

}  // namespace metarx::ad

// Minimal NumTraits so Eigen dense containers can hold Vars.
namespace Eigen {
template <>
struct NumTraits<metarx::ad::Var> : GenericNumTraits<metarx::ad::Var> {
    using Real = metarx::ad::Var;
    using NonInteger = metarx::ad::Var;
    using Nested = metarx::ad::Var;
    using Literal = double;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 1,
        AddCost = 3,
        MulCost = 3,
    };
    static inline Real epsilon() { return metarx::ad::Var(NumTraits<double>::epsilon()); }
    static inline Real dummy_precision() {
        return metarx::ad::Var(NumTraits<double>::dummy_precision());
    }
    static inline int digits10() { return NumTraits<double>::digits10(); }
};
}  // namespace Eigen
