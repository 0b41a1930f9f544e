#pragma once

#include <atomic>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "med2d/tensor.hpp"

// Reverse-mode differentiation tape. Forward ops append value nodes in
// topological order; backward() walks them in reverse, accumulating gradients
// into a store keyed by value handle. Values are immutable once recorded.

#if !defined(MED2D_NO_FINITE_CHECKS) && (!defined(NDEBUG) || defined(MED2D_FORCE_FINITE_CHECKS))
#define MED2D_FINITE_CHECKS 1
#else
#define MED2D_FINITE_CHECKS 0
#endif

namespace med2d {

struct Var {
    int32_t id = -1;
    uint32_t tape = 0;

    bool valid() const { return id >= 0; }
};

template <typename T>
class TapeT {
public:
    // invoked with the op's own output handle
    using BackFn = std::function<void(TapeT&, Var)>;

    TapeT() : serial_(next_serial()++) {}

    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // Registers an input value (weight, activation, constant). Leaves have no
    // backward rule.
    Var leaf(TensorT<T> v) {
        values_.push_back(std::move(v));
        backs_.emplace_back();
        grads_.emplace_back();
        return Var{static_cast<int32_t>(values_.size() - 1), serial_};
    }

    // Records an op result together with its backward rule. The rule reads
    // grad(output) and accumulates into grad(input) for each input it covers.
    Var record(TensorT<T> out, BackFn back) {
#if MED2D_FINITE_CHECKS
        if (!out.all_finite())
            throw std::runtime_error("non-finite value produced by forward op at node " +
                                     std::to_string(values_.size()));
#endif
        values_.push_back(std::move(out));
        backs_.push_back(std::move(back));
        grads_.emplace_back();
        return Var{static_cast<int32_t>(values_.size() - 1), serial_};
    }

    const TensorT<T>& value(Var v) const {
        check(v);
        return values_[static_cast<size_t>(v.id)];
    }

    // Gradient slot for accumulation; zero-initialized on first touch.
    TensorT<T>& grad(Var v) {
        check(v);
        auto& g = grads_[static_cast<size_t>(v.id)];
        if (g.data.empty()) g = TensorT<T>::zeros(values_[static_cast<size_t>(v.id)].shape);
        return g;
    }

    // nullptr when no gradient has reached v (v not on the path to the loss).
    const TensorT<T>* grad_if(Var v) const {
        check(v);
        const auto& g = grads_[static_cast<size_t>(v.id)];
        return g.data.empty() ? nullptr : &g;
    }

    bool has_grad(Var v) const { return grad_if(v) != nullptr; }

    // Seeds d(loss)/d(loss) = 1 and propagates through all recorded rules in
    // reverse topological order.
    void backward(Var loss) {
        check(loss);
        if (value(loss).numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(value(loss).shape));
        grad(loss)[0] += T(1);
        for (size_t i = values_.size(); i-- > 0;) {
            if (!backs_[i]) continue;
            if (grads_[i].data.empty()) continue;  // node not reachable from loss
            backs_[i](*this, Var{static_cast<int32_t>(i), serial_});
        }
    }

    size_t size() const { return values_.size(); }

private:
    void check(Var v) const {
        if (v.id < 0 || static_cast<size_t>(v.id) >= values_.size() || v.tape != serial_)
            throw std::invalid_argument("value handle does not belong to this tape");
    }

    static std::atomic<uint32_t>& next_serial() {
        static std::atomic<uint32_t> s{1};
        return s;
    }

    uint32_t serial_;
    std::vector<TensorT<T>> values_;
    std::vector<BackFn> backs_;
    std::vector<TensorT<T>> grads_;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace med2d
