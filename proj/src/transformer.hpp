#pragma once

// Internal: parameter layout and forward/backward passes of the infill model.

#include <cstddef>
#include <cstdint>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qreform/cqc.hpp"
#include "qreform/model.hpp"

namespace qreform::detail {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Vectorised reductions over Maps peel by address, so parameter and gradient
// buffers need the same alignment every time for bit-identical results.
template <class T>
struct CacheAligned {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    CacheAligned() = default;
    template <class U>
    CacheAligned(const CacheAligned<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const CacheAligned<U>&) const noexcept { return true; }
};

using ParamBuffer = std::vector<double, CacheAligned<double>>;

struct Block {
    std::size_t offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct LinearP {
    Block w;  // in x out
    Block b;  // 1 x out
};

struct NormP {
    Block gain;
    Block bias;
};

struct AttentionP {
    LinearP q, k, v, o;
};

struct FeedForwardP {
    LinearP in, out;
};

struct EncoderLayerP {
    NormP norm1;
    AttentionP self;
    NormP norm2;
    FeedForwardP ffn;
};

struct DecoderLayerP {
    NormP norm1;
    AttentionP self;
    NormP norm2;
    AttentionP cross;
    NormP norm3;
    FeedForwardP ffn;
};

enum class InitKind { Embedding, Weight, Head, Zero, One };

struct NamedBlock {
    std::string name;
    Block block;
    InitKind init;
};

struct Layout {
    std::size_t vocab = 0;
    std::size_t dim = 0;
    std::size_t heads = 0;
    Block tok_emb;
    Block enc_pos;
    Block dec_pos;
    std::vector<EncoderLayerP> encoder;
    NormP enc_norm;
    std::vector<DecoderLayerP> decoder;
    NormP dec_norm;
    LinearP head;
    std::vector<NamedBlock> named;
    std::size_t total = 0;

    static Layout make(const ModelConfig& config, std::size_t vocab_size);
};

/// Deterministic initialisation from config.seed; portable across standard libraries.
void initialize(const Layout& layout, std::uint64_t seed, std::span<double> params);

/// One forward (and optionally backward) pass over a single sample.
/// Returns the summed target-token cross-entropy. When `grad` is non-empty the
/// gradient of `weight * loss` is accumulated into it. `dropout_rng` enables
/// dropout with rate `dropout`.
double sample_loss(const Layout& layout, std::span<const double> params,
                   const CorruptedSample& sample, double weight, std::span<double> grad,
                   double dropout, std::mt19937_64* dropout_rng);

/// Encoder output for a corrupted query (no dropout).
Mat encode(const Layout& layout, std::span<const double> params, std::span<const TokenId> input);

/// Next-token distribution after `prefix` (starting with SPAN_START).
std::vector<double> next_distribution(const Layout& layout, std::span<const double> params,
                                      const Mat& memory, std::span<const TokenId> prefix);

}  // namespace qreform::detail
