#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmvb/tensor.hpp"

namespace mmvb {

class Tape;

/// Handle to a tensor recorded on a tape.
struct Value {
    Tape* tape = nullptr;
    int32_t id = -1;
    const Tensor& val() const;
    const Shape& shape() const;
};

using GradMap = std::unordered_map<int32_t, Tensor>;

/// Records primitive applications in topological order; backward() replays
/// them once in reverse. One tape per evaluation context; tapes are not
/// thread-safe, parallelism happens across independent tapes.
class Tape {
  public:
    Tape();

    Value leaf(Tensor v);
    Value constant(Tensor v);

    const Tensor& value(int32_t id) const { return nodes_[static_cast<size_t>(id)].val; }
    size_t size() const { return nodes_.size(); }

    /// Gradients of a scalar loss w.r.t. every leaf. Leaves reached only
    /// through stop_gradient get exact zeros.
    GradMap backward(Value loss);

    struct Node {
        Tensor val;
        std::vector<int32_t> inputs;
        std::function<void(Tape&, const Tensor&, const Node&)> back;
        const char* op = "leaf";
        bool requires_grad = false;
        bool is_leaf = false;
    };

    // Used by primitive implementations.
    Value record(const char* op, Tensor out, std::vector<int32_t> inputs,
                 std::function<void(Tape&, const Tensor&, const Node&)> back);
    void accum(int32_t id, const Tensor& g);
    Tensor* grad_slot(int32_t id);

  private:
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

// --- primitives -----------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value divide(Value a, Value b);

Value matmul(Value a, Value b);   // [m,k] x [k,n] -> [m,n]
Value matvec(Value a, Value x);   // [m,k] x [k]   -> [m]
Value transpose(Value a);         // [m,n] -> [n,m]

Value exp_(Value a);
Value log_(Value a);  // input clamped below at 1e-30
Value relu(Value a);
Value leaky_relu(Value a, double alpha);
Value clamp(Value a, double lo, double hi);
Value scale(Value a, double c);
Value add_scalar(Value a, double c);

Value softmax(Value a);                                    // last axis
Value masked_softmax(Value a, const std::vector<uint8_t>& mask);  // last axis
Value logsumexp(Value a);                                  // last axis, removes it
Value log_softmax(Value a);                                // last axis, rank-1 only
Value layer_norm(Value x, Value gain, Value shift);        // last axis, eps = 1e-5

Value sum_all(Value a);   // -> scalar
Value mean_all(Value a);  // -> scalar
Value sum_axis(Value a, int axis);
Value stack_scalars(const std::vector<Value>& parts);  // k scalars -> [k]
Value stack_rows(const std::vector<Value>& rows);      // r vectors of [c] -> [r,c]
Value concat(const std::vector<Value>& parts, int axis);
Value slice(Value a, int axis, int64_t start, int64_t len);
Value index(Value a, int64_t i);             // rank-1 -> scalar
Value row(Value a, int64_t i);               // [r,c] -> [c]
Value broadcast_rows(Value v, int64_t rows);  // [n] -> [rows,n]

/// Keeps rows with bit set, replaces the others with exact zeros (copy,
/// no arithmetic on the masked rows).
Value mask_rows(Value a, const std::vector<uint8_t>& bits);
/// Sum of the rows with bit set, in ascending row order.
Value masked_row_sum(Value a, const std::vector<uint8_t>& bits);

Value stop_gradient(Value a);

Value dot(Value a, Value b);  // helper: sum_all(mul(a, b))

/// Max over coordinates of |AD - central FD| / (max_j |FD_j| + 1e-12) for a
/// scalar-valued function of one tensor input.
double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double step);

// --- named-parameter evaluation context ------------------------------------

using ParamMap = std::map<std::string, Tensor>;
using NamedGrads = std::map<std::string, Tensor>;

/// Binds a parameter map to tape leaves lazily; backward() returns gradients
/// keyed by name for every parameter (zeros where a parameter was unused).
class EvalContext {
  public:
    explicit EvalContext(const ParamMap& params) : params_(&params) {}

    Tape& tape() { return tape_; }
    const ParamMap& params() const { return *params_; }

    Value param(const std::string& name);
    Value constant(Tensor v) { return tape_.constant(std::move(v)); }

    NamedGrads backward(Value loss);

  private:
    Tape tape_;
    const ParamMap* params_;
    std::unordered_map<std::string, Value> bound_;
};

double grad_norm(const NamedGrads& g);

}  // namespace mmvb
