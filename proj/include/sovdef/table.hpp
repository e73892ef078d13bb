#pragma once

#include <cstddef>
#include <vector>

namespace sovdef {

/// Dense row-major 2-D table; rows index the spending state.
template <class T>
struct Table {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Table() = default;
    Table(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    T* row(std::size_t r) { return data.data() + r * cols; }
    const T* row(std::size_t r) const { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }
};

}  // namespace sovdef
