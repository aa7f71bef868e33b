#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <memory>
#include <new>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "gazectl/error.hpp"

namespace gazectl::nc {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline constexpr std::size_t kTensorAlignment = 64;

/// 64-byte aligned allocator whose value-less construct() leaves trivially constructible
/// elements uninitialized, so resize(n) skips the zero fill.
template <class T>
struct UninitAllocator {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    UninitAllocator() = default;
    template <class U>
    UninitAllocator(const UninitAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kTensorAlignment}));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kTensorAlignment}); }
    template <class U>
    bool operator==(const UninitAllocator<U>&) const noexcept {
        return true;
    }

    template <class U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

/// Dense row-major tensor. Graph ops treat it as rows() x cols(), where cols() folds
/// every trailing dimension.
template <class T>
struct Tensor {
    using Buffer = std::vector<T, UninitAllocator<T>>;

    Shape shape;
    Buffer data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), T(0)) {}
    template <class Range>
    Tensor(Shape s, const Range& values) : shape(std::move(s)), data(std::begin(values), std::end(values)) {
        if (data.size() != shape_size(shape))
            throw Error(ErrorCode::ShapeMismatch, "tensor " + shape_str(shape) + " given " + std::to_string(data.size()) + " values");
    }
    Tensor(Shape s, std::initializer_list<T> values) : Tensor(std::move(s), std::vector<T>(values)) {}
    static Tensor matrix(std::size_t r, std::size_t c) { return Tensor(Shape{r, c}); }
    /// Contents unspecified; for outputs that are fully overwritten.
    static Tensor uninit(Shape s) {
        Tensor t;
        t.data.resize(shape_size(s));
        t.shape = std::move(s);
        return t;
    }
    static Tensor uninit_matrix(std::size_t r, std::size_t c) { return uninit(Shape{r, c}); }
    static Tensor scalar(T v) { return Tensor(Shape{1, 1}, {v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.empty() || rows() == 0 ? 1 : data.size() / rows(); }
    T& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    bool operator==(const Tensor&) const = default;
};

}  // namespace gazectl::nc
