#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include "seda/errors.hpp"

namespace seda {

// 64-byte aligned allocation for all tensor buffers. Vectorized kernels peel
// loops depending on pointer alignment, which reorders float accumulation;
// pinning the alignment keeps every computation bit-reproducible across runs
// regardless of heap layout.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        if (n == 0) return nullptr;
        const std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
        void* p = std::aligned_alloc(alignment, bytes);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using AlignedBuf = std::vector<T, AlignedAllocator<T>>;

// Dense n-dimensional array over float or double. Row-major; image batches
// use NHWC layout throughout the library.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T{0})
        : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

    Tensor(std::vector<int> shape, AlignedBuf<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_volume();
    }

    Tensor(std::vector<int> shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_volume();
    }

    Tensor(std::vector<int> shape, std::initializer_list<T> data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_volume();
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    AlignedBuf<T>& vec() { return data_; }
    const AlignedBuf<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    // Reinterprets the flat buffer under a new shape with equal volume.
    Tensor reshaped(std::vector<int> shape) const {
        if (checked_size(shape) != data_.size())
            throw ShapeError("reshape volume mismatch");
        Tensor out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    template <typename U>
    Tensor<U> astype() const {
        std::vector<U> converted(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i)
            converted[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(converted));
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        T acc{0};
        for (const T& v : data_) acc += std::abs(v);
        return std::isfinite(static_cast<double>(acc));
    }

    static std::string shape_string(const std::vector<int>& shape) {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

private:
    static std::size_t checked_size(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension in tensor shape");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    void check_volume() const {
        if (checked_size(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " +
                             std::to_string(checked_size(shape_)));
    }

    std::vector<int> shape_;
    AlignedBuf<T> data_;
};

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& where) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + where);
}

} // namespace seda
