#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace sdgn {

using edge = std::pair<std::uint32_t, std::uint32_t>;

// Dense square boolean matrix over `n` nodes.
class Adjacency {
public:
    Adjacency() = default;
    explicit Adjacency(std::size_t n): n_(n), bits_(n*n, 0) {}

    static Adjacency from_edges(std::size_t n, const std::vector<edge>& edges) {
        Adjacency a(n);
        for (auto [i, j]: edges) {
            if (i >= n || j >= n) throw validation_error("edge endpoint out of range");
            a.set(i, j, true);
            a.set(j, i, true);
        }
        return a;
    }

    std::size_t size() const { return n_; }
    bool operator()(std::size_t i, std::size_t j) const { return bits_[i*n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { bits_[i*n_ + j] = v; }

    // Unordered edges (i < j) present in either direction.
    std::vector<edge> undirected_edges() const {
        std::vector<edge> out;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j < n_; ++j) {
                if ((*this)(i, j) || (*this)(j, i)) {
                    out.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
                }
            }
        }
        return out;
    }

    std::size_t count() const {
        std::size_t c = 0;
        for (auto b: bits_) c += b;
        return c;
    }

    friend bool operator==(const Adjacency&, const Adjacency&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

} // namespace sdgn
