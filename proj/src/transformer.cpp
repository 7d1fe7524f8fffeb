#include "transformer.hpp"

#include <cmath>
#include <limits>

#include "qreform/errors.hpp"

namespace qreform::detail {

namespace {

using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;
using ConstRow = Eigen::Map<const RowVec>;
using MutRow = Eigen::Map<RowVec>;

constexpr double kNormEps = 1e-5;

double unit_uniform(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct LinearCache {
    Mat x;
};

struct NormCache {
    Mat xhat;
    Eigen::VectorXd rstd;
};

struct AttentionCache {
    LinearCache q, k, v, o;
    Mat Q, K, V;
    std::vector<Mat> probs;  // one T x S matrix per head
};

struct FeedForwardCache {
    LinearCache in, out;
    Mat pre;
};

struct DropoutCache {
    Mat mask;
    bool active = false;
};

struct EncoderLayerCache {
    NormCache n1;
    AttentionCache self;
    DropoutCache d1;
    NormCache n2;
    FeedForwardCache ffn;
    DropoutCache d2;
};

struct DecoderLayerCache {
    NormCache n1;
    AttentionCache self;
    DropoutCache d1;
    NormCache n2;
    AttentionCache cross;
    DropoutCache d2;
    NormCache n3;
    FeedForwardCache ffn;
    DropoutCache d3;
};

// Forward and backward kernels over one parameter buffer. A null cache means
// inference: nothing is retained and dropout is off.
class Pass {
public:
    Pass(const Layout& layout, std::span<const double> params, std::span<double> grad,
         double dropout, std::mt19937_64* rng)
        : layout_(layout), params_(params), grad_(grad), dropout_(dropout), rng_(rng)
    {}

    ConstMap mat(const Block& b) const
    {
        return ConstMap(params_.data() + b.offset, b.rows, b.cols);
    }
    ConstRow row(const Block& b) const { return ConstRow(params_.data() + b.offset, b.cols); }
    MutMap gmat(const Block& b) { return MutMap(grad_.data() + b.offset, b.rows, b.cols); }
    MutRow grow(const Block& b) { return MutRow(grad_.data() + b.offset, b.cols); }

    Mat embed(std::span<const TokenId> tokens, const Block& table, const Block& positions) const
    {
        const auto d = static_cast<Eigen::Index>(layout_.dim);
        Mat x(static_cast<Eigen::Index>(tokens.size()), d);
        const auto tok = mat(table);
        const auto pos = mat(positions);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const auto r = static_cast<Eigen::Index>(t);
            x.row(r) = tok.row(tokens[t]) + pos.row(r);
        }
        return x;
    }

    void embed_back(std::span<const TokenId> tokens, const Block& table, const Block& positions,
                    const Mat& dx)
    {
        auto tok = gmat(table);
        auto pos = gmat(positions);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const auto r = static_cast<Eigen::Index>(t);
            tok.row(tokens[t]) += dx.row(r);
            pos.row(r) += dx.row(r);
        }
    }

    Mat linear(const LinearP& p, const Mat& x, LinearCache* c) const
    {
        Mat y = x * mat(p.w);
        y.rowwise() += row(p.b);
        if (c) {
            c->x = x;
        }
        return y;
    }

    Mat linear_back(const LinearP& p, const LinearCache& c, const Mat& dy)
    {
        gmat(p.w).noalias() += c.x.transpose() * dy;
        grow(p.b) += dy.colwise().sum();
        return dy * mat(p.w).transpose();
    }

    Mat norm(const NormP& p, const Mat& x, NormCache* c) const
    {
        const Eigen::VectorXd mean = x.rowwise().mean();
        Mat xc = x.colwise() - mean;
        const Eigen::VectorXd var = xc.rowwise().squaredNorm() / static_cast<double>(x.cols());
        const Eigen::VectorXd rstd = (var.array() + kNormEps).rsqrt().matrix();
        Mat xhat = xc.array().colwise() * rstd.array();
        Mat y = (xhat.array().rowwise() * row(p.gain).array()).rowwise() + row(p.bias).array();
        if (c) {
            c->xhat = std::move(xhat);
            c->rstd = rstd;
        }
        return y;
    }

    Mat norm_back(const NormP& p, const NormCache& c, const Mat& dy)
    {
        grow(p.gain) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
        grow(p.bias) += dy.colwise().sum();
        const Mat dxhat = dy.array().rowwise() * row(p.gain).array();
        const Eigen::VectorXd m1 = dxhat.rowwise().mean();
        const Eigen::VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().mean().matrix();
        Mat dx = (dxhat.array().colwise() - m1.array()) - c.xhat.array().colwise() * m2.array();
        return dx.array().colwise() * c.rstd.array();
    }

    Mat attention(const AttentionP& p, const Mat& xq, const Mat& xkv, bool causal,
                  AttentionCache* c) const
    {
        const auto heads = static_cast<Eigen::Index>(layout_.heads);
        const auto d = static_cast<Eigen::Index>(layout_.dim);
        const Eigen::Index dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        Mat Q = linear(p.q, xq, c ? &c->q : nullptr);
        Mat K = linear(p.k, xkv, c ? &c->k : nullptr);
        Mat V = linear(p.v, xkv, c ? &c->v : nullptr);

        Mat concat(xq.rows(), d);
        if (c) {
            c->probs.clear();
        }
        for (Eigen::Index h = 0; h < heads; ++h) {
            Mat s = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * scale;
            for (Eigen::Index i = 0; i < s.rows(); ++i) {
                if (causal) {
                    for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
                        s(i, j) = -std::numeric_limits<double>::infinity();
                    }
                }
                const double mx = s.row(i).maxCoeff();
                s.row(i) = (s.row(i).array() - mx).exp();
                s.row(i) /= s.row(i).sum();
            }
            concat.middleCols(h * dh, dh).noalias() = s * V.middleCols(h * dh, dh);
            if (c) {
                c->probs.push_back(std::move(s));
            }
        }
        if (c) {
            c->Q = std::move(Q);
            c->K = std::move(K);
            c->V = std::move(V);
        }
        return linear(p.o, concat, c ? &c->o : nullptr);
    }

    // Accumulates into dxq and dxkv; they may alias for self-attention.
    void attention_back(const AttentionP& p, const AttentionCache& c, const Mat& dout, Mat& dxq,
                        Mat& dxkv)
    {
        const auto heads = static_cast<Eigen::Index>(layout_.heads);
        const auto d = static_cast<Eigen::Index>(layout_.dim);
        const Eigen::Index dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        const Mat dconcat = linear_back(p.o, c.o, dout);
        Mat dQ(c.Q.rows(), d);
        Mat dK(c.K.rows(), d);
        Mat dV(c.V.rows(), d);
        for (Eigen::Index h = 0; h < heads; ++h) {
            const Mat& A = c.probs[static_cast<std::size_t>(h)];
            const Mat dO = dconcat.middleCols(h * dh, dh);
            dV.middleCols(h * dh, dh).noalias() = A.transpose() * dO;
            const Mat dA = dO * c.V.middleCols(h * dh, dh).transpose();
            const Eigen::VectorXd rs = (dA.array() * A.array()).rowwise().sum().matrix();
            const Mat dS = (A.array() * (dA.array().colwise() - rs.array())).matrix() * scale;
            dQ.middleCols(h * dh, dh).noalias() = dS * c.K.middleCols(h * dh, dh);
            dK.middleCols(h * dh, dh).noalias() = dS.transpose() * c.Q.middleCols(h * dh, dh);
        }
        dxq += linear_back(p.q, c.q, dQ);
        const Mat dk = linear_back(p.k, c.k, dK);
        const Mat dv = linear_back(p.v, c.v, dV);
        dxkv += dk;
        dxkv += dv;
    }

    Mat feed_forward(const FeedForwardP& p, const Mat& x, FeedForwardCache* c) const
    {
        Mat pre = linear(p.in, x, c ? &c->in : nullptr);
        Mat hidden = pre.cwiseMax(0.0);
        if (c) {
            c->pre = std::move(pre);
        }
        return linear(p.out, hidden, c ? &c->out : nullptr);
    }

    Mat feed_forward_back(const FeedForwardP& p, const FeedForwardCache& c, const Mat& dy)
    {
        const Mat dh = linear_back(p.out, c.out, dy);
        const Mat dpre = (dh.array() * (c.pre.array() > 0.0).cast<double>()).matrix();
        return linear_back(p.in, c.in, dpre);
    }

    Mat dropout(Mat x, DropoutCache* c)
    {
        if (!c || !rng_ || dropout_ <= 0.0) {
            return x;
        }
        const double keep = 1.0 - dropout_;
        c->active = true;
        c->mask.resize(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            c->mask.data()[i] = unit_uniform(*rng_) < keep ? 1.0 / keep : 0.0;
        }
        return x.cwiseProduct(c->mask);
    }

    static Mat dropout_back(const DropoutCache& c, const Mat& dy)
    {
        return c.active ? Mat(dy.cwiseProduct(c.mask)) : dy;
    }

    Mat encoder_layer(const EncoderLayerP& p, Mat x, EncoderLayerCache* c)
    {
        const Mat a = norm(p.norm1, x, c ? &c->n1 : nullptr);
        x += dropout(attention(p.self, a, a, false, c ? &c->self : nullptr), c ? &c->d1 : nullptr);
        const Mat b = norm(p.norm2, x, c ? &c->n2 : nullptr);
        x += dropout(feed_forward(p.ffn, b, c ? &c->ffn : nullptr), c ? &c->d2 : nullptr);
        return x;
    }

    Mat encoder_layer_back(const EncoderLayerP& p, const EncoderLayerCache& c, Mat dx)
    {
        const Mat db = feed_forward_back(p.ffn, c.ffn, dropout_back(c.d2, dx));
        dx += norm_back(p.norm2, c.n2, db);
        Mat da = Mat::Zero(dx.rows(), dx.cols());
        attention_back(p.self, c.self, dropout_back(c.d1, dx), da, da);
        dx += norm_back(p.norm1, c.n1, da);
        return dx;
    }

    Mat decoder_layer(const DecoderLayerP& p, Mat x, const Mat& memory, DecoderLayerCache* c)
    {
        const Mat a = norm(p.norm1, x, c ? &c->n1 : nullptr);
        x += dropout(attention(p.self, a, a, true, c ? &c->self : nullptr), c ? &c->d1 : nullptr);
        const Mat b = norm(p.norm2, x, c ? &c->n2 : nullptr);
        x += dropout(attention(p.cross, b, memory, false, c ? &c->cross : nullptr),
                     c ? &c->d2 : nullptr);
        const Mat f = norm(p.norm3, x, c ? &c->n3 : nullptr);
        x += dropout(feed_forward(p.ffn, f, c ? &c->ffn : nullptr), c ? &c->d3 : nullptr);
        return x;
    }

    Mat decoder_layer_back(const DecoderLayerP& p, const DecoderLayerCache& c, Mat dx,
                           Mat& dmemory)
    {
        const Mat df = feed_forward_back(p.ffn, c.ffn, dropout_back(c.d3, dx));
        dx += norm_back(p.norm3, c.n3, df);
        Mat db = Mat::Zero(dx.rows(), dx.cols());
        attention_back(p.cross, c.cross, dropout_back(c.d2, dx), db, dmemory);
        dx += norm_back(p.norm2, c.n2, db);
        Mat da = Mat::Zero(dx.rows(), dx.cols());
        attention_back(p.self, c.self, dropout_back(c.d1, dx), da, da);
        dx += norm_back(p.norm1, c.n1, da);
        return dx;
    }

    const Layout& layout() const { return layout_; }

private:
    const Layout& layout_;
    std::span<const double> params_;
    std::span<double> grad_;
    double dropout_;
    std::mt19937_64* rng_;
};

void check_tokens(const Layout& layout, std::span<const TokenId> tokens, const char* what)
{
    for (TokenId id : tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= layout.vocab) {
            throw Error(ErrorKind::VocabMismatch,
                        std::string(what) + " token id " + std::to_string(id)
                            + " outside model vocabulary of " + std::to_string(layout.vocab));
        }
    }
}

void check_length(const Layout& layout, std::size_t len, const char* what)
{
    if (len == 0 || len > static_cast<std::size_t>(layout.enc_pos.rows)) {
        throw Error(ErrorKind::MalformedInput,
                    std::string(what) + " length " + std::to_string(len) + " outside [1, "
                        + std::to_string(layout.enc_pos.rows) + "]");
    }
}

void softmax_rows(Mat& logits)
{
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - mx).exp();
        logits.row(i) /= logits.row(i).sum();
    }
}

}  // namespace

Layout Layout::make(const ModelConfig& config, std::size_t vocab_size)
{
    Layout l;
    l.vocab = vocab_size;
    l.dim = config.embed_dim;
    l.heads = config.heads;
    const auto d = static_cast<Eigen::Index>(config.embed_dim);
    const auto ff = static_cast<Eigen::Index>(config.feedforward_dim);
    const auto v = static_cast<Eigen::Index>(vocab_size);
    const auto len = static_cast<Eigen::Index>(config.max_input_len);

    std::size_t cursor = 0;
    auto add = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols, InitKind init) {
        Block b{cursor, rows, cols};
        cursor += b.size();
        l.named.push_back({name, b, init});
        return b;
    };
    auto linear = [&](const std::string& name, Eigen::Index in, Eigen::Index out, InitKind init) {
        return LinearP{add(name + ".weight", in, out, init), add(name + ".bias", 1, out, InitKind::Zero)};
    };
    auto norm = [&](const std::string& name) {
        return NormP{add(name + ".gain", 1, d, InitKind::One), add(name + ".bias", 1, d, InitKind::Zero)};
    };
    auto attention = [&](const std::string& name) {
        return AttentionP{linear(name + ".q", d, d, InitKind::Weight),
                          linear(name + ".k", d, d, InitKind::Weight),
                          linear(name + ".v", d, d, InitKind::Weight),
                          linear(name + ".o", d, d, InitKind::Weight)};
    };
    auto feed_forward = [&](const std::string& name) {
        return FeedForwardP{linear(name + ".in", d, ff, InitKind::Weight),
                            linear(name + ".out", ff, d, InitKind::Weight)};
    };

    l.tok_emb = add("embed.tokens", v, d, InitKind::Embedding);
    l.enc_pos = add("embed.encoder_positions", len, d, InitKind::Embedding);
    l.dec_pos = add("embed.decoder_positions", len, d, InitKind::Embedding);
    for (std::size_t i = 0; i < config.layers; ++i) {
        const std::string p = "encoder." + std::to_string(i);
        EncoderLayerP layer;
        layer.norm1 = norm(p + ".norm1");
        layer.self = attention(p + ".self");
        layer.norm2 = norm(p + ".norm2");
        layer.ffn = feed_forward(p + ".ffn");
        l.encoder.push_back(layer);
    }
    l.enc_norm = norm("encoder.norm");
    for (std::size_t i = 0; i < config.layers; ++i) {
        const std::string p = "decoder." + std::to_string(i);
        DecoderLayerP layer;
        layer.norm1 = norm(p + ".norm1");
        layer.self = attention(p + ".self");
        layer.norm2 = norm(p + ".norm2");
        layer.cross = attention(p + ".cross");
        layer.norm3 = norm(p + ".norm3");
        layer.ffn = feed_forward(p + ".ffn");
        l.decoder.push_back(layer);
    }
    l.dec_norm = norm("decoder.norm");
    l.head = linear("head", d, v, InitKind::Head);
    l.total = cursor;
    return l;
}

void initialize(const Layout& layout, std::uint64_t seed, std::span<double> params)
{
    std::mt19937_64 rng(seed);
    for (const auto& nb : layout.named) {
        double* p = params.data() + nb.block.offset;
        const std::size_t n = nb.block.size();
        double bound = 0.0;
        switch (nb.init) {
        case InitKind::Zero:
            std::fill(p, p + n, 0.0);
            continue;
        case InitKind::One:
            std::fill(p, p + n, 1.0);
            continue;
        case InitKind::Embedding:
            bound = std::sqrt(3.0);  // unit variance
            break;
        case InitKind::Weight:
            bound = std::sqrt(6.0 / static_cast<double>(nb.block.rows + nb.block.cols));
            break;
        case InitKind::Head:
            // std 0.5/sqrt(in): untrained logits stay close to uniform
            bound = 0.5 * std::sqrt(3.0 / static_cast<double>(nb.block.rows));
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = (2.0 * unit_uniform(rng) - 1.0) * bound;
        }
    }
}

double sample_loss(const Layout& layout, std::span<const double> params,
                   const CorruptedSample& sample, double weight, std::span<double> grad,
                   double dropout, std::mt19937_64* dropout_rng)
{
    check_length(layout, sample.corrupted.size(), "corrupted input");
    check_length(layout, sample.target_span.size() + 1, "target span");
    check_tokens(layout, sample.corrupted, "input");
    check_tokens(layout, sample.target_span, "target");

    TokenIds prefix;
    prefix.reserve(sample.target_span.size() + 1);
    prefix.push_back(kSpanStartId);
    prefix.insert(prefix.end(), sample.target_span.begin(), sample.target_span.end());
    TokenIds targets(sample.target_span);
    targets.push_back(kSpanEndId);

    Pass pass(layout, params, grad, dropout, dropout_rng);

    std::vector<EncoderLayerCache> enc_cache(layout.encoder.size());
    NormCache enc_norm_cache;
    Mat x = pass.embed(sample.corrupted, layout.tok_emb, layout.enc_pos);
    for (std::size_t i = 0; i < layout.encoder.size(); ++i) {
        x = pass.encoder_layer(layout.encoder[i], std::move(x), &enc_cache[i]);
    }
    const Mat memory = pass.norm(layout.enc_norm, x, &enc_norm_cache);

    std::vector<DecoderLayerCache> dec_cache(layout.decoder.size());
    NormCache dec_norm_cache;
    LinearCache head_cache;
    Mat y = pass.embed(prefix, layout.tok_emb, layout.dec_pos);
    for (std::size_t i = 0; i < layout.decoder.size(); ++i) {
        y = pass.decoder_layer(layout.decoder[i], std::move(y), memory, &dec_cache[i]);
    }
    const Mat final = pass.norm(layout.dec_norm, y, &dec_norm_cache);
    Mat probs = pass.linear(layout.head, final, &head_cache);
    softmax_rows(probs);

    double loss = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        loss -= std::log(std::max(probs(static_cast<Eigen::Index>(t), targets[t]),
                                  std::numeric_limits<double>::min()));
    }
    if (grad.empty()) {
        return loss;
    }

    Mat dlogits = probs;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        dlogits(static_cast<Eigen::Index>(t), targets[t]) -= 1.0;
    }
    dlogits *= weight;

    Mat dy = pass.norm_back(layout.dec_norm, dec_norm_cache, pass.linear_back(layout.head, head_cache, dlogits));
    Mat dmemory = Mat::Zero(memory.rows(), memory.cols());
    for (std::size_t i = layout.decoder.size(); i-- > 0;) {
        dy = pass.decoder_layer_back(layout.decoder[i], dec_cache[i], std::move(dy), dmemory);
    }
    pass.embed_back(prefix, layout.tok_emb, layout.dec_pos, dy);

    Mat dx = pass.norm_back(layout.enc_norm, enc_norm_cache, dmemory);
    for (std::size_t i = layout.encoder.size(); i-- > 0;) {
        dx = pass.encoder_layer_back(layout.encoder[i], enc_cache[i], std::move(dx));
    }
    pass.embed_back(sample.corrupted, layout.tok_emb, layout.enc_pos, dx);
    return loss;
}

Mat encode(const Layout& layout, std::span<const double> params, std::span<const TokenId> input)
{
    check_length(layout, input.size(), "corrupted input");
    check_tokens(layout, input, "input");
    Pass pass(layout, params, {}, 0.0, nullptr);
    Mat x = pass.embed(input, layout.tok_emb, layout.enc_pos);
    for (const auto& layer : layout.encoder) {
        x = pass.encoder_layer(layer, std::move(x), nullptr);
    }
    return pass.norm(layout.enc_norm, x, nullptr);
}

std::vector<double> next_distribution(const Layout& layout, std::span<const double> params,
                                      const Mat& memory, std::span<const TokenId> prefix)
{
    check_length(layout, prefix.size(), "decoder prefix");
    Pass pass(layout, params, {}, 0.0, nullptr);
    Mat y = pass.embed(prefix, layout.tok_emb, layout.dec_pos);
    for (const auto& layer : layout.decoder) {
        y = pass.decoder_layer(layer, std::move(y), memory, nullptr);
    }
    // only the last position is needed for the next token
    const Mat last = pass.norm(layout.dec_norm, y.bottomRows(1), nullptr);
    Mat logits = pass.linear(layout.head, last, nullptr);
    softmax_rows(logits);
    return std::vector<double>(logits.data(), logits.data() + logits.cols());
}

}  // namespace qreform::detail
