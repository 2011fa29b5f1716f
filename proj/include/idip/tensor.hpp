#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "idip/error.hpp"

namespace idip {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class GradientTape;

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // tape that produced this tensor, 0 for leaves

  void accumulate_grad(std::span<const T> g);
  std::span<T> grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

/// Dense row-major tensor handle. Copies alias the same storage; use clone()
/// for an independent copy. Operations in ops.hpp record onto the active
/// GradientTape when any input requires a gradient.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->data.size(); }

  std::span<const T> data() const { return storage_->data; }
  /// In-place access for leaf updates (optimizer steps, test perturbation).
  std::span<T> mutable_data() { return storage_->data; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool value) { storage_->requires_grad = value; }
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> mutable_grad() { return storage_->grad_buffer(); }
  void zero_grad() { storage_->grad.clear(); }

  /// Detached deep copy (no gradient, no tape link).
  Tensor clone() const;

  const std::shared_ptr<detail::TensorStorage<T>>& storage() const { return storage_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorStorage<T>> storage) : storage_(std::move(storage)) {}
  std::shared_ptr<detail::TensorStorage<T>> storage_;
};

/// Ordered record of differentiable operations executed while the tape is
/// recording on the current thread. Supports exactly one backward pass.
template <typename T>
class GradientTape {
 public:
  using BackwardFn = std::function<void(std::span<const T> output_grad)>;

  /// RAII guard that makes a tape the active one on this thread.
  class Recording {
   public:
    explicit Recording(GradientTape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    GradientTape* previous_;
  };

  GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  [[nodiscard]] Recording record() { return Recording(*this); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded node in reverse.
  void backward(const Tensor<T>& loss);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t id() const noexcept { return id_; }

  static GradientTape* active() noexcept;

  /// Called by operations; no-op unless `output` requires a gradient.
  void push(const Tensor<T>& output, BackwardFn fn);

 private:
  struct Node {
    std::shared_ptr<detail::TensorStorage<T>> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t id_;
  bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradientTape<float>;
extern template class GradientTape<double>;

}  // namespace idip
