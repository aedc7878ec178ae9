#include "kdlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace kdlab {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = M v
std::vector<double> matvec(const DenseMatrix& m, std::span<const double> v) {
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        y[r] = acc;
    }
    return y;
}

// y += M^T v
void matvec_t_acc(const DenseMatrix& m, std::span<const double> v,
                  std::vector<double>& y) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        const double vr = v[r];
        if (vr == 0.0) continue;
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * vr;
    }
}

// G += a b^T
void outer_acc(DenseMatrix& g, std::span<const double> a,
               std::span<const double> b) {
    for (std::size_t r = 0; r < g.rows; ++r) {
        const double ar = a[r];
        if (ar == 0.0) continue;
        double* row = g.data.data() + r * g.cols;
        for (std::size_t c = 0; c < g.cols; ++c) row[c] += ar * b[c];
    }
}

void add_to(std::vector<double>& y, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

void check_token(const ModelConfig& config, int token) {
    if (token < 0 || token >= config.vocab_size) {
        throw std::invalid_argument("token id " + std::to_string(token) +
                                    " outside vocabulary of size " +
                                    std::to_string(config.vocab_size));
    }
}

std::vector<int> consumed_sequence(const ModelParams& params,
                                   std::span<const int> prompt,
                                   std::span<const int> response) {
    std::vector<int> full(prompt.begin(), prompt.end());
    if (!response.empty()) {
        full.insert(full.end(), response.begin(), response.end() - 1);
    }
    for (int t : full) check_token(params.config, t);
    if (!response.empty()) check_token(params.config, response.back());
    if (full.size() > static_cast<std::size_t>(params.config.context_len)) {
        throw std::invalid_argument(
            "sequence of " + std::to_string(full.size()) +
            " tokens exceeds context length " +
            std::to_string(params.config.context_len));
    }
    return full;
}

LogitsVector output_logits(const ModelParams& params,
                           std::span<const double> h) {
    const auto& wo =
        params.blocks[params.config.arch == ArchKind::kGru
                          ? static_cast<std::size_t>(gru_block::kOutProj)
                          : static_cast<std::size_t>(attn_block::kOutProj)];
    const auto& bo =
        params.blocks[params.config.arch == ArchKind::kGru
                          ? static_cast<std::size_t>(gru_block::kOutBias)
                          : static_cast<std::size_t>(attn_block::kOutBias)];
    LogitsVector logits = matvec(wo, h);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += bo.data[i];
    return logits;
}

std::span<const double> embedding_row(const ModelParams& params, int token) {
    const auto& emb = params.blocks[0];
    return {emb.data.data() + static_cast<std::size_t>(token) * emb.cols,
            emb.cols};
}

constexpr char kMagic[8] = {'K', 'D', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

// --- vocabulary ---

Vocab Vocab::default_vocab(int size) {
    constexpr int kCore = 3 + kNumTaskWords + kNumDigits + kNumLetters;
    if (size < kCore || size > 256) {
        throw std::invalid_argument("vocab size " + std::to_string(size) +
                                    " outside [" + std::to_string(kCore) + ", 256]");
    }
    Vocab v;
    v.tokens = {"<pad>", "<bos>", "<eos>", "copy", "reverse", "sort", "repeat", "arith"};
    for (int d = 0; d < kNumDigits; ++d) v.tokens.push_back(std::string(1, static_cast<char>('0' + d)));
    for (int l = 0; l < kNumLetters; ++l) v.tokens.push_back(std::string(1, static_cast<char>('a' + l)));
    for (int f = 0; static_cast<int>(v.tokens.size()) < size; ++f) {
        v.tokens.push_back("f" + std::to_string(f));
    }
    for (int i = 0; i < size; ++i) v.ids.emplace(v.tokens[i], i);
    v.pad_id = 0;
    v.bos_id = 1;
    v.eos_id = 2;
    return v;
}

int Vocab::id_of(const std::string& token) const {
    auto it = ids.find(token);
    if (it == ids.end()) throw VocabError("unknown token: \"" + token + "\"");
    return it->second;
}

const std::string& Vocab::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw VocabError("token id " + std::to_string(id) +
                         " outside vocabulary of size " + std::to_string(size()));
    }
    return tokens[static_cast<std::size_t>(id)];
}

// --- configuration ---

std::string arch_name(ArchKind arch) {
    return arch == ArchKind::kGru ? "gru" : "attn1";
}

ArchKind arch_from_name(const std::string& name) {
    if (name == "gru") return ArchKind::kGru;
    if (name == "attn1") return ArchKind::kAttn1;
    throw std::invalid_argument("unknown architecture: \"" + name + "\"");
}

void validate_model_config(const ModelConfig& config) {
    if (config.vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
    if (config.embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
    if (config.hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
    if (config.context_len < 1) throw std::invalid_argument("context_len must be >= 1");
}

std::vector<std::pair<std::size_t, std::size_t>> block_shapes(
    const ModelConfig& config) {
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto de = static_cast<std::size_t>(config.embed_dim);
    const auto dh = static_cast<std::size_t>(config.hidden_dim);
    const auto len = static_cast<std::size_t>(config.context_len);
    if (config.arch == ArchKind::kGru) {
        return {{v, de},  {dh, de}, {dh, de}, {dh, de}, {dh, dh}, {dh, dh},
                {dh, dh}, {1, dh},  {1, dh},  {1, dh},  {v, dh},  {1, v}};
    }
    return {{v, de}, {len, de}, {de, de}, {de, de}, {de, de},
            {dh, de}, {1, dh},  {v, dh},  {1, v}};
}

std::vector<std::string> block_names(ArchKind arch) {
    if (arch == ArchKind::kGru) {
        return {"embedding", "wz", "wr", "wh", "uz", "ur",
                "uh", "bz", "br", "bh", "out_proj", "out_bias"};
    }
    return {"embedding", "pos", "wq", "wk", "wv", "w1", "b1", "out_proj", "out_bias"};
}

ModelParams ModelParams::init(const ModelConfig& config, SeededRng& rng) {
    validate_model_config(config);
    ModelParams params;
    params.config = config;
    const auto shapes = block_shapes(config);
    const bool gru = config.arch == ArchKind::kGru;
    for (std::size_t b = 0; b < shapes.size(); ++b) {
        DenseMatrix m(shapes[b].first, shapes[b].second);
        const bool bias =
            gru ? (b == gru_block::kBz || b == gru_block::kBr ||
                   b == gru_block::kBh || b == gru_block::kOutBias)
                : (b == attn_block::kB1 || b == attn_block::kOutBias);
        if (!bias) {
            for (auto& w : m.data) w = rng.next_uniform(-0.08, 0.08);
        }
        params.blocks.push_back(std::move(m));
    }
    return params;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.count();
    return n;
}

std::vector<double> ModelParams::to_flat() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& b : blocks) flat.insert(flat.end(), b.data.begin(), b.data.end());
    return flat;
}

void ModelParams::from_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw std::invalid_argument("flat parameter vector has wrong length");
    }
    std::size_t off = 0;
    for (auto& b : blocks) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + b.count()),
                  b.data.begin());
        off += b.count();
    }
}

// --- incremental decoding ---

DecoderState init_decoder(const ModelParams& params) {
    DecoderState state;
    if (params.config.arch == ArchKind::kGru) {
        state.h.assign(static_cast<std::size_t>(params.config.hidden_dim), 0.0);
    }
    return state;
}

void decoder_advance(const ModelParams& params, DecoderState& state, int token) {
    check_token(params.config, token);
    if (state.consumed >= params.config.context_len) {
        throw std::invalid_argument("decoder context overflow at length " +
                                    std::to_string(state.consumed));
    }
    const auto x_emb = embedding_row(params, token);
    if (params.config.arch == ArchKind::kGru) {
        const auto& b = params.blocks;
        auto az = matvec(b[gru_block::kWz], x_emb);
        auto ar = matvec(b[gru_block::kWr], x_emb);
        auto ah = matvec(b[gru_block::kWh], x_emb);
        add_to(az, matvec(b[gru_block::kUz], state.h));
        add_to(ar, matvec(b[gru_block::kUr], state.h));
        const auto dh = state.h.size();
        std::vector<double> z(dh), r(dh), rh(dh);
        for (std::size_t i = 0; i < dh; ++i) {
            z[i] = sigmoid(az[i] + b[gru_block::kBz].data[i]);
            r[i] = sigmoid(ar[i] + b[gru_block::kBr].data[i]);
            rh[i] = r[i] * state.h[i];
        }
        add_to(ah, matvec(b[gru_block::kUh], rh));
        for (std::size_t i = 0; i < dh; ++i) {
            const double c = std::tanh(ah[i] + b[gru_block::kBh].data[i]);
            state.h[i] = (1.0 - z[i]) * state.h[i] + z[i] * c;
        }
    } else {
        const auto& b = params.blocks;
        const auto& pos = b[attn_block::kPos];
        std::vector<double> x(x_emb.begin(), x_emb.end());
        const double* prow =
            pos.data.data() + static_cast<std::size_t>(state.consumed) * pos.cols;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += prow[i];
        state.ks.push_back(matvec(b[attn_block::kWk], x));
        state.vs.push_back(matvec(b[attn_block::kWv], x));
        state.xs.push_back(std::move(x));
    }
    ++state.consumed;
}

namespace {

// attn1 hidden after `consumed` tokens, attending from the last position.
std::vector<double> attn_hidden(const ModelParams& params,
                                const std::vector<std::vector<double>>& xs,
                                const std::vector<std::vector<double>>& ks,
                                const std::vector<std::vector<double>>& vs,
                                std::size_t consumed,
                                std::vector<double>* attn_weights = nullptr,
                                std::vector<double>* att_out = nullptr,
                                std::vector<double>* q_out = nullptr) {
    const auto& b = params.blocks;
    const std::size_t s = consumed - 1;
    const double inv = 1.0 / std::sqrt(static_cast<double>(params.config.embed_dim));
    auto q = matvec(b[attn_block::kWq], xs[s]);
    std::vector<double> scores(consumed);
    for (std::size_t j = 0; j < consumed; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * ks[j][i];
        scores[j] = dot * inv;
    }
    const auto a = softmax(scores).p;
    std::vector<double> att(static_cast<std::size_t>(params.config.embed_dim), 0.0);
    for (std::size_t j = 0; j < consumed; ++j) {
        for (std::size_t i = 0; i < att.size(); ++i) att[i] += a[j] * vs[j][i];
    }
    auto h = matvec(b[attn_block::kW1], att);
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = std::tanh(h[i] + b[attn_block::kB1].data[i]);
    }
    if (attn_weights) *attn_weights = a;
    if (att_out) *att_out = att;
    if (q_out) *q_out = std::move(q);
    return h;
}

}  // namespace

LogitsVector decoder_logits(const ModelParams& params, const DecoderState& state) {
    if (params.config.arch == ArchKind::kGru) {
        return output_logits(params, state.h);
    }
    if (state.consumed == 0) {
        const auto& bo = params.blocks[attn_block::kOutBias];
        return LogitsVector(bo.data.begin(), bo.data.end());
    }
    const auto h = attn_hidden(params, state.xs, state.ks, state.vs,
                               static_cast<std::size_t>(state.consumed));
    return output_logits(params, h);
}

// --- whole-sequence forward ---

ProbVector forward_dist(const ModelParams& params, std::span<const int> context) {
    if (context.size() > static_cast<std::size_t>(params.config.context_len)) {
        throw std::invalid_argument("context exceeds context length");
    }
    auto state = init_decoder(params);
    for (int t : context) decoder_advance(params, state, t);
    return softmax(decoder_logits(params, state));
}

std::vector<LogitsVector> forward_seq_logits(const ModelParams& params,
                                             std::span<const int> prompt,
                                             std::span<const int> response) {
    const auto full = consumed_sequence(params, prompt, response);
    std::vector<LogitsVector> out;
    out.reserve(response.size());
    auto state = init_decoder(params);
    std::size_t next = prompt.size();
    if (response.empty()) return out;
    if (next == 0) out.push_back(decoder_logits(params, state));
    for (std::size_t s = 0; s < full.size(); ++s) {
        decoder_advance(params, state, full[s]);
        if (s + 1 >= next) out.push_back(decoder_logits(params, state));
    }
    return out;
}

std::vector<ProbVector> forward_seq(const ModelParams& params,
                                    std::span<const int> prompt,
                                    std::span<const int> response) {
    auto logits = forward_seq_logits(params, prompt, response);
    std::vector<ProbVector> dists;
    dists.reserve(logits.size());
    for (const auto& l : logits) dists.push_back(softmax(l));
    return dists;
}

// --- reverse mode ---

namespace {

std::vector<DenseMatrix> zero_grads(const ModelParams& params) {
    std::vector<DenseMatrix> grads;
    grads.reserve(params.blocks.size());
    for (const auto& b : params.blocks) grads.emplace_back(b.rows, b.cols);
    return grads;
}

std::vector<DenseMatrix> backward_gru(
    const ModelParams& params, const std::vector<int>& full, std::size_t prompt_len,
    const std::vector<std::vector<double>>& logit_grads) {
    const auto& b = params.blocks;
    const std::size_t dh = static_cast<std::size_t>(params.config.hidden_dim);
    const std::size_t steps = full.size();

    std::vector<std::vector<double>> zs(steps), rs(steps), cs(steps), hs(steps);
    std::vector<double> h(dh, 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto x = embedding_row(params, full[s]);
        auto az = matvec(b[gru_block::kWz], x);
        auto ar = matvec(b[gru_block::kWr], x);
        auto ah = matvec(b[gru_block::kWh], x);
        add_to(az, matvec(b[gru_block::kUz], h));
        add_to(ar, matvec(b[gru_block::kUr], h));
        std::vector<double> z(dh), r(dh), rh(dh), c(dh);
        for (std::size_t i = 0; i < dh; ++i) {
            z[i] = sigmoid(az[i] + b[gru_block::kBz].data[i]);
            r[i] = sigmoid(ar[i] + b[gru_block::kBr].data[i]);
            rh[i] = r[i] * h[i];
        }
        add_to(ah, matvec(b[gru_block::kUh], rh));
        for (std::size_t i = 0; i < dh; ++i) {
            c[i] = std::tanh(ah[i] + b[gru_block::kBh].data[i]);
            h[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
        }
        zs[s] = std::move(z);
        rs[s] = std::move(r);
        cs[s] = std::move(c);
        hs[s] = h;
    }

    auto grads = zero_grads(params);
    const std::vector<double> h0(dh, 0.0);
    auto hidden_at = [&](std::ptrdiff_t s) -> const std::vector<double>& {
        return s < 0 ? h0 : hs[static_cast<std::size_t>(s)];
    };

    // Per-step hidden gradients from the output head.
    std::vector<std::vector<double>> dh_out(steps);
    for (std::size_t t = 0; t < logit_grads.size(); ++t) {
        const auto& g = logit_grads[t];
        const std::ptrdiff_t s =
            static_cast<std::ptrdiff_t>(prompt_len) + static_cast<std::ptrdiff_t>(t) - 1;
        const auto& hsrc = hidden_at(s);
        outer_acc(grads[gru_block::kOutProj], g, hsrc);
        for (std::size_t i = 0; i < g.size(); ++i) {
            grads[gru_block::kOutBias].data[i] += g[i];
        }
        if (s < 0) continue;
        auto& slot = dh_out[static_cast<std::size_t>(s)];
        if (slot.empty()) slot.assign(dh, 0.0);
        matvec_t_acc(b[gru_block::kOutProj], g, slot);
    }

    std::vector<double> dh_carry(dh, 0.0);
    for (std::ptrdiff_t s = static_cast<std::ptrdiff_t>(steps) - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        std::vector<double> dht = dh_carry;
        if (!dh_out[su].empty()) add_to(dht, dh_out[su]);

        const auto& hprev = hidden_at(s - 1);
        const auto& z = zs[su];
        const auto& r = rs[su];
        const auto& c = cs[su];
        const auto x = embedding_row(params, full[su]);

        std::vector<double> daz(dh), dar(dh), dah(dh), dhprev(dh), rh(dh);
        for (std::size_t i = 0; i < dh; ++i) {
            const double dz = dht[i] * (c[i] - hprev[i]);
            daz[i] = dz * z[i] * (1.0 - z[i]);
            dah[i] = dht[i] * z[i] * (1.0 - c[i] * c[i]);
            dhprev[i] = dht[i] * (1.0 - z[i]);
            rh[i] = r[i] * hprev[i];
        }
        outer_acc(grads[gru_block::kWh], dah, x);
        outer_acc(grads[gru_block::kUh], dah, rh);
        add_to(grads[gru_block::kBh].data, dah);
        std::vector<double> drh(dh, 0.0);
        matvec_t_acc(b[gru_block::kUh], dah, drh);
        for (std::size_t i = 0; i < dh; ++i) {
            const double dr = drh[i] * hprev[i];
            dhprev[i] += drh[i] * r[i];
            dar[i] = dr * r[i] * (1.0 - r[i]);
        }
        outer_acc(grads[gru_block::kWr], dar, x);
        outer_acc(grads[gru_block::kUr], dar, hprev);
        add_to(grads[gru_block::kBr].data, dar);
        matvec_t_acc(b[gru_block::kUr], dar, dhprev);
        outer_acc(grads[gru_block::kWz], daz, x);
        outer_acc(grads[gru_block::kUz], daz, hprev);
        add_to(grads[gru_block::kBz].data, daz);
        matvec_t_acc(b[gru_block::kUz], daz, dhprev);

        std::vector<double> dx(x.size(), 0.0);
        matvec_t_acc(b[gru_block::kWh], dah, dx);
        matvec_t_acc(b[gru_block::kWr], dar, dx);
        matvec_t_acc(b[gru_block::kWz], daz, dx);
        auto& demb = grads[gru_block::kEmbedding];
        double* erow = demb.data.data() + static_cast<std::size_t>(full[su]) * demb.cols;
        for (std::size_t i = 0; i < dx.size(); ++i) erow[i] += dx[i];

        dh_carry = std::move(dhprev);
    }
    return grads;
}

std::vector<DenseMatrix> backward_attn(
    const ModelParams& params, const std::vector<int>& full, std::size_t prompt_len,
    const std::vector<std::vector<double>>& logit_grads) {
    const auto& b = params.blocks;
    const std::size_t de = static_cast<std::size_t>(params.config.embed_dim);
    const std::size_t steps = full.size();
    const double inv = 1.0 / std::sqrt(static_cast<double>(params.config.embed_dim));

    std::vector<std::vector<double>> xs(steps), ks(steps), vs(steps);
    const auto& pos = b[attn_block::kPos];
    for (std::size_t j = 0; j < steps; ++j) {
        const auto e = embedding_row(params, full[j]);
        std::vector<double> x(e.begin(), e.end());
        const double* prow = pos.data.data() + j * pos.cols;
        for (std::size_t i = 0; i < de; ++i) x[i] += prow[i];
        ks[j] = matvec(b[attn_block::kWk], x);
        vs[j] = matvec(b[attn_block::kWv], x);
        xs[j] = std::move(x);
    }

    auto grads = zero_grads(params);
    std::vector<std::vector<double>> dks(steps), dvs(steps), dxs(steps);

    for (std::size_t t = 0; t < logit_grads.size(); ++t) {
        const auto& g = logit_grads[t];
        const std::ptrdiff_t send =
            static_cast<std::ptrdiff_t>(prompt_len) + static_cast<std::ptrdiff_t>(t) - 1;
        for (std::size_t i = 0; i < g.size(); ++i) {
            grads[attn_block::kOutBias].data[i] += g[i];
        }
        if (send < 0) continue;
        const std::size_t s = static_cast<std::size_t>(send);
        const std::size_t consumed = s + 1;

        std::vector<double> a, att, q;
        const auto h = attn_hidden(params, xs, ks, vs, consumed, &a, &att, &q);

        outer_acc(grads[attn_block::kOutProj], g, h);
        std::vector<double> dhid(h.size(), 0.0);
        matvec_t_acc(b[attn_block::kOutProj], g, dhid);
        for (std::size_t i = 0; i < dhid.size(); ++i) dhid[i] *= 1.0 - h[i] * h[i];
        outer_acc(grads[attn_block::kW1], dhid, att);
        add_to(grads[attn_block::kB1].data, dhid);
        std::vector<double> datt(de, 0.0);
        matvec_t_acc(b[attn_block::kW1], dhid, datt);

        std::vector<double> da(consumed, 0.0);
        double a_dot_da = 0.0;
        for (std::size_t j = 0; j < consumed; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < de; ++i) dot += vs[j][i] * datt[i];
            da[j] = dot;
            a_dot_da += a[j] * dot;
            if (dvs[j].empty()) dvs[j].assign(de, 0.0);
            for (std::size_t i = 0; i < de; ++i) dvs[j][i] += a[j] * datt[i];
        }
        std::vector<double> dq(de, 0.0);
        for (std::size_t j = 0; j < consumed; ++j) {
            const double dscore = a[j] * (da[j] - a_dot_da) * inv;
            if (dscore == 0.0) continue;
            for (std::size_t i = 0; i < de; ++i) {
                dq[i] += dscore * ks[j][i];
            }
            if (dks[j].empty()) dks[j].assign(de, 0.0);
            for (std::size_t i = 0; i < de; ++i) dks[j][i] += dscore * q[i];
        }
        outer_acc(grads[attn_block::kWq], dq, xs[s]);
        if (dxs[s].empty()) dxs[s].assign(de, 0.0);
        matvec_t_acc(b[attn_block::kWq], dq, dxs[s]);
    }

    for (std::size_t j = 0; j < steps; ++j) {
        if (!dks[j].empty()) {
            outer_acc(grads[attn_block::kWk], dks[j], xs[j]);
            if (dxs[j].empty()) dxs[j].assign(de, 0.0);
            matvec_t_acc(b[attn_block::kWk], dks[j], dxs[j]);
        }
        if (!dvs[j].empty()) {
            outer_acc(grads[attn_block::kWv], dvs[j], xs[j]);
            if (dxs[j].empty()) dxs[j].assign(de, 0.0);
            matvec_t_acc(b[attn_block::kWv], dvs[j], dxs[j]);
        }
        if (dxs[j].empty()) continue;
        auto& demb = grads[attn_block::kEmbedding];
        double* erow = demb.data.data() + static_cast<std::size_t>(full[j]) * demb.cols;
        double* prow = grads[attn_block::kPos].data.data() + j * pos.cols;
        for (std::size_t i = 0; i < de; ++i) {
            erow[i] += dxs[j][i];
            prow[i] += dxs[j][i];
        }
    }
    return grads;
}

}  // namespace

std::vector<DenseMatrix> backward(
    const ModelParams& params, std::span<const int> prompt,
    std::span<const int> response,
    const std::vector<std::vector<double>>& logit_grads) {
    if (logit_grads.size() != response.size()) {
        throw std::invalid_argument("logit_grads length must match response length");
    }
    for (const auto& g : logit_grads) {
        if (g.size() != static_cast<std::size_t>(params.config.vocab_size)) {
            throw std::invalid_argument("logit gradient has wrong width");
        }
    }
    const auto full = consumed_sequence(params, prompt, response);
    if (params.config.arch == ArchKind::kGru) {
        return backward_gru(params, full, prompt.size(), logit_grads);
    }
    return backward_attn(params, full, prompt.size(), logit_grads);
}

// --- checkpoints ---

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    binio::put_u32(out, kCheckpointVersion);
    binio::put_u32(out, params.config.arch == ArchKind::kGru ? 0u : 1u);
    binio::put_u32(out, static_cast<std::uint32_t>(params.config.vocab_size));
    binio::put_u32(out, static_cast<std::uint32_t>(params.config.embed_dim));
    binio::put_u32(out, static_cast<std::uint32_t>(params.config.hidden_dim));
    binio::put_u32(out, static_cast<std::uint32_t>(params.config.context_len));
    binio::put_u32(out, static_cast<std::uint32_t>(params.blocks.size()));
    for (const auto& block : params.blocks) {
        binio::put_u64(out, block.rows);
        binio::put_u64(out, block.cols);
        for (double w : block.data) binio::put_f64(out, w);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    binio::ByteReader r{buf};
    r.need(sizeof(kMagic), "magic");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a model checkpoint (bad magic): " + path.string());
    }
    r.pos = sizeof(kMagic);
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto arch = r.u32("architecture");
    if (arch > 1) throw FormatError("unknown architecture code " + std::to_string(arch));

    ModelParams params;
    params.config.arch = arch == 0 ? ArchKind::kGru : ArchKind::kAttn1;
    params.config.vocab_size = static_cast<int>(r.u32("vocab size"));
    params.config.embed_dim = static_cast<int>(r.u32("embed dim"));
    params.config.hidden_dim = static_cast<int>(r.u32("hidden dim"));
    params.config.context_len = static_cast<int>(r.u32("context length"));
    try {
        validate_model_config(params.config);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid checkpoint configuration: ") + e.what());
    }
    const auto n_blocks = r.u32("block count");
    const auto shapes = block_shapes(params.config);
    if (n_blocks != shapes.size()) {
        throw FormatError("checkpoint block count " + std::to_string(n_blocks) +
                          " does not match architecture (expected " +
                          std::to_string(shapes.size()) + ")");
    }
    for (std::size_t bi = 0; bi < shapes.size(); ++bi) {
        const auto rows = r.u64("block rows");
        const auto cols = r.u64("block cols");
        if (rows != shapes[bi].first || cols != shapes[bi].second) {
            throw FormatError("block " + std::to_string(bi) + " has shape " +
                              std::to_string(rows) + "x" + std::to_string(cols) +
                              ", expected " + std::to_string(shapes[bi].first) + "x" +
                              std::to_string(shapes[bi].second));
        }
        DenseMatrix m(rows, cols);
        r.need(m.count() * 8, "block data");
        for (auto& w : m.data) w = r.f64("block data");
        params.blocks.push_back(std::move(m));
    }
    if (r.pos != buf.size()) {
        throw FormatError("checkpoint has " + std::to_string(buf.size() - r.pos) +
                          " trailing bytes");
    }
    return params;
}

}  // namespace kdlab
