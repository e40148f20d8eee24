#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace difflens {

class Tape;

/// Reverse-mode scalar. A Real with a null tape pointer is a plain constant;
/// arithmetic between taped values and constants never allocates nodes for
/// the constant side.
struct Real {
    double v = 0.0;
    Tape* tape = nullptr;
    int32_t idx = -1;

    Real() = default;
    Real(double value) : v(value) {} // NOLINT: implicit constant promotion is intended
    Real(double value, Tape* t, int32_t i) : v(value), tape(t), idx(i) {}

    bool taped() const { return tape != nullptr; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Real& x) { return x.v; }

/// A node whose backward pass is supplied by hand. The op declares exactly
/// what it keeps alive via saved_bytes(); the tape charges nothing else to it.
class CustomOp {
public:
    virtual ~CustomOp() = default;
    /// Read adjoints of the op's outputs from the tape and accumulate
    /// adjoints into its inputs. Invoked exactly once per backward sweep.
    virtual void backward(Tape& tape) = 0;
    virtual std::size_t saved_bytes() const = 0;
    virtual const char* name() const { return "custom"; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Real leaf(double value) {
        int32_t i = push_node(value, NodeKind::Leaf, 0);
        return Real(value, this, i);
    }

    /// n-ary elementary node: result value plus (parent, d result/d parent)
    /// pairs. Constant parents are dropped.
    Real node(double value, std::initializer_list<std::pair<Real, double>> parents) {
        return node_span(value, parents.begin(), parents.size());
    }

    Real node_span(double value, const std::pair<Real, double>* parents, std::size_t n) {
        uint32_t first = static_cast<uint32_t>(parents_.size());
        uint16_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const auto& [p, partial] = parents[j];
            if (!p.taped()) continue;
            assert(p.tape == this && "mixing values from different tapes");
            parents_.push_back({static_cast<uint32_t>(p.idx), partial});
            ++count;
        }
        int32_t i = push_node(value, NodeKind::Elementary, count, first);
        return Real(value, this, i);
    }

    struct CustomHandle {
        int32_t op_index = -1;
        int32_t out_begin = -1;
        int32_t out_count = 0;
    };

    /// Installs a custom op followed by its output slots. Outputs sit after
    /// the marker so a reverse sweep sees their adjoints before invoking the
    /// op's backward.
    CustomHandle add_custom(std::unique_ptr<CustomOp> op, std::span<const double> out_values) {
        CustomHandle h;
        h.op_index = static_cast<int32_t>(customs_.size());
        push_node(0.0, NodeKind::CustomMarker, 0, static_cast<uint32_t>(h.op_index));
        h.out_begin = static_cast<int32_t>(nodes_.size());
        h.out_count = static_cast<int32_t>(out_values.size());
        for (double v : out_values) push_node(v, NodeKind::CustomOutput, 0);
        customs_.push_back(std::move(op));
        return h;
    }

    Real output(const CustomHandle& h, int32_t i) {
        assert(i >= 0 && i < h.out_count);
        int32_t idx = h.out_begin + i;
        return Real(values_[static_cast<std::size_t>(idx)], this, idx);
    }

    void backward(const Real& seed) {
        std::pair<Real, double> s{seed, 1.0};
        backward_multi({&s, 1});
    }

    /// Reverse sweep from several seeds at once (scalar loss plus externally
    /// supplied cotangents, e.g. a PSF merit hook).
    void backward_multi(std::span<const std::pair<Real, double>> seeds) {
        adjoints_.assign(values_.size(), 0.0);
        for (const auto& [r, w] : seeds) {
            if (!r.taped()) continue;
            assert(r.tape == this);
            adjoints_[static_cast<std::size_t>(r.idx)] += w;
        }
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            const Node& nd = nodes_[i];
            if (nd.kind == NodeKind::CustomMarker) {
                customs_[nd.first]->backward(*this);
                continue;
            }
            if (nd.kind != NodeKind::Elementary) continue;
            double a = adjoints_[i];
            if (a == 0.0) continue;
            const auto* par = parents_.data() + nd.first;
            for (uint16_t j = 0; j < nd.n; ++j)
                adjoints_[par[j].index] += a * par[j].partial;
        }
    }

    double adjoint(const Real& r) const {
        if (!r.taped()) return 0.0;
        return adjoints_[static_cast<std::size_t>(r.idx)];
    }

    double adjoint_at(int32_t idx) const { return adjoints_[static_cast<std::size_t>(idx)]; }
    void accumulate_adjoint(int32_t idx, double da) { adjoints_[static_cast<std::size_t>(idx)] += da; }
    double value_at(int32_t idx) const { return values_[static_cast<std::size_t>(idx)]; }

    std::size_t size() const { return nodes_.size(); }

    /// Bytes retained by the tape itself plus everything custom ops declare.
    std::size_t saved_bytes() const {
        std::size_t b = nodes_.size() * sizeof(Node) + parents_.size() * sizeof(Parent) +
                        values_.size() * sizeof(double) + adjoints_.size() * sizeof(double);
        for (const auto& c : customs_) b += c->saved_bytes();
        return b;
    }

    std::size_t custom_saved_bytes(const CustomHandle& h) const {
        return customs_[static_cast<std::size_t>(h.op_index)]->saved_bytes() +
               static_cast<std::size_t>(h.out_count) * (sizeof(Node) + 2 * sizeof(double));
    }

    void clear() {
        nodes_.clear();
        parents_.clear();
        values_.clear();
        adjoints_.clear();
        customs_.clear();
    }

private:
    enum class NodeKind : uint8_t { Leaf, Elementary, CustomMarker, CustomOutput };
    struct Node {
        uint32_t first = 0; // parent arena offset, or custom op index for markers
        uint16_t n = 0;
        NodeKind kind = NodeKind::Leaf;
    };
    struct Parent {
        uint32_t index;
        double partial;
    };

    int32_t push_node(double value, NodeKind kind, uint16_t n, uint32_t first = 0) {
        nodes_.push_back({first, n, kind});
        values_.push_back(value);
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<Parent> parents_;
    std::vector<std::unique_ptr<CustomOp>> customs_;

    friend struct Real;
};

namespace detail {
inline Tape* tape_of(const Real& a, const Real& b) {
    if (a.taped() && b.taped()) {
        assert(a.tape == b.tape && "mixing values from different tapes");
        return a.tape;
    }
    return a.taped() ? a.tape : b.tape;
}
} // namespace detail

inline Real operator+(const Real& a, const Real& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Real(a.v + b.v);
    return t->node(a.v + b.v, {{a, 1.0}, {b, 1.0}});
}
inline Real operator-(const Real& a, const Real& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Real(a.v - b.v);
    return t->node(a.v - b.v, {{a, 1.0}, {b, -1.0}});
}
inline Real operator-(const Real& a) {
    if (!a.taped()) return Real(-a.v);
    return a.tape->node(-a.v, {{a, -1.0}});
}
inline Real operator*(const Real& a, const Real& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Real(a.v * b.v);
    return t->node(a.v * b.v, {{a, b.v}, {b, a.v}});
}
inline Real operator/(const Real& a, const Real& b) {
    Tape* t = detail::tape_of(a, b);
    double q = a.v / b.v; // value path identical to plain-double code
    if (!t) return Real(q);
    double inv = 1.0 / b.v;
    return t->node(q, {{a, inv}, {b, -q * inv}});
}

inline Real& operator+=(Real& a, const Real& b) { return a = a + b; }
inline Real& operator-=(Real& a, const Real& b) { return a = a - b; }
inline Real& operator*=(Real& a, const Real& b) { return a = a * b; }
inline Real& operator/=(Real& a, const Real& b) { return a = a / b; }

inline Real sqrt(const Real& a) {
    double r = std::sqrt(a.v);
    if (!a.taped()) return Real(r);
    return a.tape->node(r, {{a, 0.5 / r}});
}
inline Real sin(const Real& a) {
    if (!a.taped()) return Real(std::sin(a.v));
    return a.tape->node(std::sin(a.v), {{a, std::cos(a.v)}});
}
inline Real cos(const Real& a) {
    if (!a.taped()) return Real(std::cos(a.v));
    return a.tape->node(std::cos(a.v), {{a, -std::sin(a.v)}});
}
inline Real abs(const Real& a) {
    if (!a.taped()) return Real(std::fabs(a.v));
    // subgradient 0 at the kink
    double s = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
    return a.tape->node(std::fabs(a.v), {{a, s}});
}
inline Real pow(const Real& a, int n) {
    double r = std::pow(a.v, n);
    if (!a.taped()) return Real(r);
    return a.tape->node(r, {{a, n * std::pow(a.v, n - 1)}});
}

/// cos/sin pair of a phase, i.e. exp(i*phase) kept as explicit components.
inline std::pair<Real, Real> expi(const Real& phase) { return {cos(phase), sin(phase)}; }

/// min against the active branch; at an exact tie the constant branch wins.
inline Real branch_min(const Real& a, const Real& b) { return value_of(a) < value_of(b) ? a : b; }
inline Real branch_max(const Real& a, const Real& b) { return value_of(a) > value_of(b) ? a : b; }
inline double branch_min(double a, double b) { return a < b ? a : b; }
inline double branch_max(double a, double b) { return a > b ? a : b; }

inline double abs_val(double a) { return std::fabs(a); }
inline Real abs_val(const Real& a) { return abs(a); }

} // namespace difflens
