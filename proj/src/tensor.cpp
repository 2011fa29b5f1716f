#include "idip/tensor.hpp"

#include <atomic>
#include <sstream>

namespace idip {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

template <typename T>
void TensorStorage<T>::accumulate_grad(std::span<const T> g) {
  auto buffer = grad_buffer();
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] += g[i];
}

template <typename T>
std::span<T> TensorStorage<T>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), T(0));
  return grad;
}

template struct TensorStorage<float>;
template struct TensorStorage<double>;

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : storage_(std::make_shared<detail::TensorStorage<T>>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return storage_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), storage_->data, false);
}

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

template <typename T>
GradientTape<T>*& active_tape() {
  thread_local GradientTape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
GradientTape<T>::Recording::Recording(GradientTape& tape) : previous_(active_tape<T>()) {
  if (tape.consumed_) throw TapeError("cannot record onto a consumed tape");
  active_tape<T>() = &tape;
}

template <typename T>
GradientTape<T>::Recording::~Recording() {
  active_tape<T>() = previous_;
}

template <typename T>
GradientTape<T>::GradientTape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
GradientTape<T>* GradientTape<T>::active() noexcept {
  return active_tape<T>();
}

template <typename T>
void GradientTape<T>::push(const Tensor<T>& output, BackwardFn fn) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  output.storage()->tape_id = id_;
  nodes_.push_back(Node{output.storage(), std::move(fn)});
}

template <typename T>
void GradientTape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape");
  if (!loss.defined() || loss.size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " +
                    (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (loss.storage()->tape_id != id_) {
    throw TapeError("loss was not produced under this tape");
  }
  auto& storage = *loss.storage();
  storage.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from loss
    it->backward(it->output->grad);
  }
  nodes_.clear();
  consumed_ = true;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientTape<float>;
template class GradientTape<double>;

}  // namespace idip
