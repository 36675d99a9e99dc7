#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tbseg {

// Dense n-dimensional f32 array, row-major. The flat buffer length always
// equals the product of the extents; ops in this library treat any
// non-finite value as an error, never as a silent state.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<float> data);

  static Tensor full(std::vector<size_t> shape, float value);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t extent(size_t dim) const { return shape_[dim]; }
  size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<size_t> shape_;
  std::vector<float> data_;
};

// Label maps and other per-voxel byte data share the Tensor layout but
// hold u8 values (class ids in [0, C)).
class ByteImage {
 public:
  ByteImage() = default;
  explicit ByteImage(std::vector<size_t> shape);
  ByteImage(std::vector<size_t> shape, std::vector<uint8_t> data);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t extent(size_t dim) const { return shape_[dim]; }
  size_t size() const { return data_.size(); }

  uint8_t* data() { return data_.data(); }
  const uint8_t* data() const { return data_.data(); }
  uint8_t& operator[](size_t i) { return data_[i]; }
  uint8_t operator[](size_t i) const { return data_[i]; }

  bool same_shape(const ByteImage& other) const { return shape_ == other.shape_; }

 private:
  std::vector<size_t> shape_;
  std::vector<uint8_t> data_;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

// Throws std::runtime_error naming `context` if any element is NaN/Inf.
void require_finite(const Tensor& t, const char* context);

}  // namespace tbseg
