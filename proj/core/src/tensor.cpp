#include "scgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scgen {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
  data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape.str());
  }
}

template <class T>
Tensor<T> Tensor<T>::vector(std::vector<T> values) {
  const auto len = static_cast<std::int64_t>(values.size());
  return Tensor(Shape{1, len, 1, 1}, std::move(values));
}

template <class T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

template <class T>
bool Tensor<T>::all_finite() const {
  for (const T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class T>
void Tensor<T>::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << data_[i] << " at flat index " << i << " of tensor "
         << shape_.str();
      throw ValidityError(os.str());
    }
  }
}

void require_shape(const Shape& got, const Shape& want, const std::string& what) {
  if (!(got == want)) {
    throw ShapeError(what + ": expected shape " + want.str() + ", got " + got.str());
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace scgen
