#include "tbseg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tbseg {

size_t shape_product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {
void check_extents(const std::vector<size_t>& shape) {
  for (size_t e : shape) {
    if (e == 0) {
      throw std::invalid_argument("tensor extent must be positive, got shape " +
                                  shape_to_string(shape));
    }
  }
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_product(shape_), 0.0f);
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<size_t> shape, float value) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = value;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape()); }

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

ByteImage::ByteImage(std::vector<size_t> shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_product(shape_), 0);
}

ByteImage::ByteImage(std::vector<size_t> shape, std::vector<uint8_t> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("byte image data length does not match shape " +
                                shape_to_string(shape_));
  }
}

void require_finite(const Tensor& t, const char* context) {
  if (!t.all_finite()) {
    throw std::runtime_error(std::string(context) + ": non-finite value in tensor of shape " +
                             t.shape_str());
  }
}

}  // namespace tbseg
