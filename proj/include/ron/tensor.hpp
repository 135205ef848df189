#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ron {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-4 tensor, row-major N-C-H-W. Data and grad are shared buffers so a
// Tensor handle can be captured by backward closures cheaply.
template <typename T>
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad;  // allocated on demand
    bool requires_grad = false;

    Tensor() = default;

    Tensor(int n, int c, int h, int w, bool rg = false)
        : shape{n, c, h, w},
          data(std::make_shared<std::vector<T>>(static_cast<size_t>(n) * c * h * w, T(0))),
          requires_grad(rg) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw DimensionError("negative tensor extent");
        if (rg) ensure_grad();
    }

    size_t size() const { return data ? data->size() : 0; }

    size_t index(int n, int c, int h, int w) const {
        return ((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    T& at(int n, int c, int h, int w) { return (*data)[index(n, c, h, w)]; }
    T at(int n, int c, int h, int w) const { return (*data)[index(n, c, h, w)]; }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T* gptr() { return grad->data(); }
    const T* gptr() const { return grad->data(); }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<T>>(size(), T(0));
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T scalar() const {
        if (size() != 1) throw DimensionError("scalar() on non-scalar tensor");
        return (*data)[0];
    }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T v : *t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

// Tape of backward closures in forward execution order. backward() seeds the
// loss grad with 1 and replays the tape in reverse; grads accumulate by +=,
// so a parameter used on several paths collects all of them.
template <typename T>
class Graph {
public:
    void record(std::function<void()> fn) { tape_.push_back(std::move(fn)); }

    void backward(Tensor<T>& loss) {
        if (loss.size() != 1) throw DimensionError("backward expects a scalar loss");
        loss.ensure_grad();
        (*loss.grad)[0] = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    void clear() { tape_.clear(); }
    size_t num_ops() const { return tape_.size(); }

private:
    std::vector<std::function<void()>> tape_;
};

}  // namespace ron
