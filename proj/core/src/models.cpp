#include <microchar/models.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include <microchar/nn/checkpoint.hpp>
#include <microchar/psilm.hpp>

using nlohmann::json;

namespace microchar {

// ---------------------------------------------------------------------------
// ArchSpec
// ---------------------------------------------------------------------------

ArchSpec ArchSpec::default_binary() {
    ArchSpec spec;
    spec.levels = 3;
    spec.channels = {16, 32, 64};
    spec.enc_filters.assign(static_cast<std::size_t>(2 * spec.levels + 2), 3);
    spec.dec_filters.assign(static_cast<std::size_t>(spec.levels), 3);
    spec.out_channels = 1;
    return spec;
}

ArchSpec ArchSpec::default_rgb() {
    ArchSpec spec = default_binary();
    spec.out_channels = 3;
    return spec;
}

std::vector<int> ArchSpec::all_filters() const {
    std::vector<int> all = enc_filters;
    all.insert(all.end(), dec_filters.begin(), dec_filters.end());
    return all;
}

void ArchSpec::validate() const {
    if (levels < 1) throw InvalidSpec("ArchSpec: levels must be >= 1");
    if (static_cast<int>(channels.size()) != levels) {
        throw InvalidSpec("ArchSpec: channels length must equal levels");
    }
    for (int c : channels) {
        if (c < 1) throw InvalidSpec("ArchSpec: channels must be positive");
    }
    if (static_cast<int>(enc_filters.size()) != 2 * levels + 2) {
        throw InvalidSpec("ArchSpec: enc_filters must have 2*levels+2 entries");
    }
    if (static_cast<int>(dec_filters.size()) != levels) {
        throw InvalidSpec("ArchSpec: dec_filters must have levels entries");
    }
    for (int k : all_filters()) {
        if (!nn::valid_kernel_size(k)) {
            throw InvalidSpec("ArchSpec: filters must come from {1,3,5,7,9}");
        }
    }
    if (out_channels != 1 && out_channels != 3) {
        throw InvalidSpec("ArchSpec: out_channels must be 1 or 3");
    }
}

std::string ArchSpec::to_json() const {
    const json j{{"levels", levels},
                 {"channels", channels},
                 {"enc_filters", enc_filters},
                 {"dec_filters", dec_filters},
                 {"out_channels", out_channels}};
    return j.dump();
}

ArchSpec ArchSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ArchSpec spec;
    spec.levels = j.at("levels").get<int>();
    spec.channels = j.at("channels").get<std::vector<int>>();
    spec.enc_filters = j.at("enc_filters").get<std::vector<int>>();
    spec.dec_filters = j.at("dec_filters").get<std::vector<int>>();
    spec.out_channels = j.at("out_channels").get<int>();
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Cedn
// ---------------------------------------------------------------------------

struct Cedn::Trace {
    std::vector<nn::Tensor> enc_in, enc_z1, enc_a1, enc_z2, enc_a2;
    std::vector<nn::PoolResult<float>> pools;
    nn::Tensor bott_z1, bott_a1, bott_z2, bott_a2;
    std::vector<nn::Tensor> up_in, cat, dec_z, dec_a;
    nn::Tensor out_z, out_y;
};

Cedn::~Cedn() = default;
Cedn::Cedn(Cedn&&) noexcept = default;
Cedn& Cedn::operator=(Cedn&&) noexcept = default;

Cedn::Cedn(const ArchSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    const int levels = spec_.levels;
    sigmoid_head_ = spec_.out_channels == 1;

    int prev = 1;
    for (int i = 0; i < levels; ++i) {
        const int ch = spec_.channels[static_cast<std::size_t>(i)];
        enc_convs_.emplace_back(prev, ch, spec_.enc_filters[static_cast<std::size_t>(2 * i)]);
        enc_convs_.emplace_back(ch, ch, spec_.enc_filters[static_cast<std::size_t>(2 * i + 1)]);
        prev = ch;
    }
    const int bott = 2 * spec_.channels.back();
    enc_convs_.emplace_back(prev, bott, spec_.enc_filters[static_cast<std::size_t>(2 * levels)]);
    enc_convs_.emplace_back(bott, bott, spec_.enc_filters[static_cast<std::size_t>(2 * levels + 1)]);

    int cur = bott;
    for (int i = levels - 1; i >= 0; --i) {
        const int ch = spec_.channels[static_cast<std::size_t>(i)];
        ups_.emplace_back(cur, ch);
        dec_convs_.emplace_back(2 * ch, ch, spec_.dec_filters[static_cast<std::size_t>(i)]);
        cur = ch;
    }
    out_conv_ = nn::Conv2d<float>(cur, spec_.out_channels, 1);

    Rng rng = Rng::stream(init_seed, "cedn/init");
    for (auto& conv : enc_convs_) conv.init(rng);
    for (auto& up : ups_) up.init(rng);
    for (auto& conv : dec_convs_) conv.init(rng);
    out_conv_.init(rng);
}

nn::Tensor Cedn::run(const nn::Tensor& x, Trace* trace) const {
    const int levels = spec_.levels;
    const int div = 1 << levels;
    if (x.h % div != 0 || x.w % div != 0) {
        throw ShapeMismatch("Cedn: input extent must be divisible by 2^levels");
    }

    nn::Tensor cur = x;
    std::vector<nn::Tensor> skips;
    for (int i = 0; i < levels; ++i) {
        if (trace) trace->enc_in.push_back(cur);
        nn::Tensor z1 = enc_convs_[static_cast<std::size_t>(2 * i)].forward(cur);
        nn::Tensor a1 = nn::relu_forward(z1);
        nn::Tensor z2 = enc_convs_[static_cast<std::size_t>(2 * i + 1)].forward(a1);
        nn::Tensor a2 = nn::relu_forward(z2);
        nn::PoolResult<float> pool = nn::maxpool2x2_forward(a2);
        cur = pool.out;
        skips.push_back(a2);
        if (trace) {
            trace->enc_z1.push_back(std::move(z1));
            trace->enc_a1.push_back(std::move(a1));
            trace->enc_z2.push_back(std::move(z2));
            trace->enc_a2.push_back(a2);
            trace->pools.push_back(std::move(pool));
        }
    }

    nn::Tensor zb1 = enc_convs_[static_cast<std::size_t>(2 * levels)].forward(cur);
    nn::Tensor ab1 = nn::relu_forward(zb1);
    nn::Tensor zb2 = enc_convs_[static_cast<std::size_t>(2 * levels + 1)].forward(ab1);
    nn::Tensor ab2 = nn::relu_forward(zb2);
    if (trace) {
        trace->bott_z1 = std::move(zb1);
        trace->bott_a1 = ab1;
        trace->bott_z2 = std::move(zb2);
        trace->bott_a2 = ab2;
    }
    cur = ab2;

    for (int j = 0; j < levels; ++j) {
        const int level = levels - 1 - j;
        if (trace) trace->up_in.push_back(cur);
        nn::Tensor u = ups_[static_cast<std::size_t>(j)].forward(cur);
        nn::Tensor cat = nn::concat_channels(u, skips[static_cast<std::size_t>(level)]);
        nn::Tensor zd = dec_convs_[static_cast<std::size_t>(j)].forward(cat);
        nn::Tensor ad = nn::relu_forward(zd);
        cur = ad;
        if (trace) {
            trace->cat.push_back(std::move(cat));
            trace->dec_z.push_back(std::move(zd));
            trace->dec_a.push_back(ad);
        }
    }

    nn::Tensor zo = out_conv_.forward(cur);
    nn::Tensor y = sigmoid_head_ ? nn::sigmoid_forward(zo) : zo;
    if (trace) {
        trace->out_z = std::move(zo);
        trace->out_y = y;
    }
    return y;
}

nn::Tensor Cedn::forward(const nn::Tensor& x) const { return run(x, nullptr); }

nn::Tensor Cedn::forward_train(const nn::Tensor& x) {
    trace_ = std::make_unique<Trace>();
    return run(x, trace_.get());
}

void Cedn::backward(const nn::Tensor& dy) {
    if (!trace_) throw InvalidArgument("Cedn::backward without forward_train");
    Trace& t = *trace_;
    const int levels = spec_.levels;

    nn::Tensor dz = sigmoid_head_ ? nn::sigmoid_backward(t.out_y, dy) : dy;
    nn::Tensor cur = out_conv_.backward(t.dec_a.back(), dz);

    std::vector<nn::Tensor> skip_grads(static_cast<std::size_t>(levels));
    for (int j = levels - 1; j >= 0; --j) {
        const int level = levels - 1 - j;
        nn::Tensor dzd = nn::relu_backward(t.dec_z[static_cast<std::size_t>(j)], cur);
        nn::Tensor dcat =
            dec_convs_[static_cast<std::size_t>(j)].backward(t.cat[static_cast<std::size_t>(j)], dzd);
        const int ch = spec_.channels[static_cast<std::size_t>(level)];
        auto [du, dskip] = nn::split_channels(dcat, ch, ch);
        skip_grads[static_cast<std::size_t>(level)] = std::move(dskip);
        cur = ups_[static_cast<std::size_t>(j)].backward(t.up_in[static_cast<std::size_t>(j)], du);
    }

    nn::Tensor dzb2 = nn::relu_backward(t.bott_z2, cur);
    nn::Tensor dab1 =
        enc_convs_[static_cast<std::size_t>(2 * levels + 1)].backward(t.bott_a1, dzb2);
    nn::Tensor dzb1 = nn::relu_backward(t.bott_z1, dab1);
    cur = enc_convs_[static_cast<std::size_t>(2 * levels)].backward(
        t.pools.back().out, dzb1);

    for (int i = levels - 1; i >= 0; --i) {
        nn::Tensor da2 = nn::maxpool2x2_backward(t.pools[static_cast<std::size_t>(i)],
                                                 t.enc_a2[static_cast<std::size_t>(i)], cur);
        const nn::Tensor& sg = skip_grads[static_cast<std::size_t>(i)];
        for (std::size_t e = 0; e < da2.size(); ++e) da2.data[e] += sg.data[e];
        nn::Tensor dz2 = nn::relu_backward(t.enc_z2[static_cast<std::size_t>(i)], da2);
        nn::Tensor da1 = enc_convs_[static_cast<std::size_t>(2 * i + 1)].backward(
            t.enc_a1[static_cast<std::size_t>(i)], dz2);
        nn::Tensor dz1 = nn::relu_backward(t.enc_z1[static_cast<std::size_t>(i)], da1);
        cur = enc_convs_[static_cast<std::size_t>(2 * i)].backward(
            t.enc_in[static_cast<std::size_t>(i)], dz1);
    }
    trace_.reset();
}

void Cedn::zero_grad() {
    for (auto& conv : enc_convs_) conv.zero_grad();
    for (auto& up : ups_) up.zero_grad();
    for (auto& conv : dec_convs_) conv.zero_grad();
    out_conv_.zero_grad();
}

std::vector<nn::ParamRef<float>> Cedn::param_refs() {
    std::vector<nn::ParamRef<float>> refs;
    for (auto& conv : enc_convs_) {
        for (auto& r : conv.param_refs()) refs.push_back(r);
    }
    for (auto& up : ups_) {
        for (auto& r : up.param_refs()) refs.push_back(r);
    }
    for (auto& conv : dec_convs_) {
        for (auto& r : conv.param_refs()) refs.push_back(r);
    }
    for (auto& r : out_conv_.param_refs()) refs.push_back(r);
    return refs;
}

std::size_t Cedn::param_count() const {
    std::size_t total = 0;
    for (const auto& conv : enc_convs_) total += conv.param_count();
    for (const auto& up : ups_) total += up.param_count();
    for (const auto& conv : dec_convs_) total += conv.param_count();
    return total + out_conv_.param_count();
}

void Cedn::save(const std::string& path, const std::string& meta_json) {
    const json arch{{"type", "cedn"}, {"spec", json::parse(spec_.to_json())}};
    nn::save_checkpoint(path, arch.dump(), param_refs());
    if (!meta_json.empty()) nn::write_sidecar(path, meta_json);
}

Cedn Cedn::load(const std::string& path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    const json arch = json::parse(ckpt.arch_json);
    if (arch.at("type").get<std::string>() != "cedn") {
        throw NoCheckpoint("not a cedn checkpoint: " + path);
    }
    Cedn net(ArchSpec::from_json(arch.at("spec").dump()));
    nn::restore_params(ckpt, net.param_refs());
    return net;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

namespace {
constexpr int kClassifierChannels[3] = {8, 16, 32};
} // namespace

struct Classifier::Trace {
    std::vector<nn::Tensor> conv_in, z, a;
    std::vector<nn::PoolResult<float>> pools;
    nn::Tensor gap_out, logits, probs;
};

Classifier::~Classifier() = default;
Classifier::Classifier(Classifier&&) noexcept = default;
Classifier& Classifier::operator=(Classifier&&) noexcept = default;

Classifier::Classifier(std::uint64_t init_seed) {
    int prev = 1;
    for (int ch : kClassifierChannels) {
        convs_.emplace_back(prev, ch, 3);
        prev = ch;
    }
    head_ = nn::Linear<float>(prev, 3);
    Rng rng = Rng::stream(init_seed, "classifier/init");
    for (auto& conv : convs_) conv.init(rng);
    head_.init(rng);
}

nn::Tensor Classifier::run(const nn::Tensor& x, Trace* trace) const {
    nn::Tensor cur = x;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        if (trace) trace->conv_in.push_back(cur);
        nn::Tensor z = convs_[l].forward(cur);
        nn::Tensor a = nn::relu_forward(z);
        nn::PoolResult<float> pool = nn::maxpool2x2_forward(a);
        cur = pool.out;
        if (trace) {
            trace->z.push_back(std::move(z));
            trace->a.push_back(std::move(a));
            trace->pools.push_back(std::move(pool));
        }
    }
    nn::Tensor gap = nn::global_avg_pool_forward(cur);
    nn::Tensor logits = head_.forward(gap);
    nn::Tensor probs = nn::softmax_forward(logits);
    if (trace) {
        trace->gap_out = gap;
        trace->logits = std::move(logits);
        trace->probs = probs;
    }
    return probs;
}

nn::Tensor Classifier::forward(const nn::Tensor& x) const { return run(x, nullptr); }

nn::Tensor Classifier::forward_train(const nn::Tensor& x) {
    trace_ = std::make_unique<Trace>();
    return run(x, trace_.get());
}

void Classifier::backward(const nn::Tensor& dprobs) {
    if (!trace_) throw InvalidArgument("Classifier::backward without forward_train");
    Trace& t = *trace_;
    nn::Tensor dlogits = nn::softmax_backward(t.probs, dprobs);
    nn::Tensor dgap = head_.backward(t.gap_out, dlogits);
    nn::Tensor cur = nn::global_avg_pool_backward(t.pools.back().out, dgap);
    for (int l = static_cast<int>(convs_.size()) - 1; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        nn::Tensor da = nn::maxpool2x2_backward(t.pools[lu], t.a[lu], cur);
        nn::Tensor dz = nn::relu_backward(t.z[lu], da);
        cur = convs_[lu].backward(t.conv_in[lu], dz);
    }
    trace_.reset();
}

void Classifier::zero_grad() {
    for (auto& conv : convs_) conv.zero_grad();
    head_.zero_grad();
}

std::vector<nn::ParamRef<float>> Classifier::param_refs() {
    std::vector<nn::ParamRef<float>> refs;
    for (auto& conv : convs_) {
        for (auto& r : conv.param_refs()) refs.push_back(r);
    }
    for (auto& r : head_.param_refs()) refs.push_back(r);
    return refs;
}

std::size_t Classifier::param_count() const {
    std::size_t total = head_.param_count();
    for (const auto& conv : convs_) total += conv.param_count();
    return total;
}

void Classifier::save(const std::string& path, const std::string& meta_json) {
    const json arch{{"type", "classifier"}};
    nn::save_checkpoint(path, arch.dump(), param_refs());
    if (!meta_json.empty()) nn::write_sidecar(path, meta_json);
}

Classifier Classifier::load(const std::string& path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    const json arch = json::parse(ckpt.arch_json);
    if (arch.at("type").get<std::string>() != "classifier") {
        throw NoCheckpoint("not a classifier checkpoint: " + path);
    }
    Classifier net;
    nn::restore_params(ckpt, net.param_refs());
    return net;
}

ClassLabel classify(const Classifier& net, const GrayImage& img) {
    nn::Tensor x = pad_to_multiple(gray_to_tensor(img), 8);
    const nn::Tensor probs = net.forward(x);
    ClassLabel label;
    for (int j = 0; j < 3; ++j) label.probs[static_cast<std::size_t>(j)] = probs.at(0, j, 0, 0);
    const auto best =
        std::max_element(label.probs.begin(), label.probs.end()) - label.probs.begin();
    label.cls = best == 0 ? DefectClass::Pores
                          : (best == 1 ? DefectClass::Particles : DefectClass::Grains);
    return label;
}

// ---------------------------------------------------------------------------
// RegressionNet
// ---------------------------------------------------------------------------

struct RegressionNet::Trace {
    std::vector<nn::Tensor> conv_in, z, a;
    std::vector<nn::PoolResult<float>> pools;
    nn::Tensor gap_out, fc1_z, fc1_a;
};

RegressionNet::~RegressionNet() = default;
RegressionNet::RegressionNet(RegressionNet&&) noexcept = default;
RegressionNet& RegressionNet::operator=(RegressionNet&&) noexcept = default;

RegressionNet::RegressionNet(int bins, std::uint64_t init_seed) : bins_(bins) {
    if (bins < 1) throw InvalidSpec("RegressionNet: bins must be >= 1");
    const int chans[3] = {16, 32, 64};
    int prev = 3;
    for (int ch : chans) {
        convs_.emplace_back(prev, ch, 3);
        prev = ch;
    }
    fc1_ = nn::Linear<float>(prev, 64);
    fc2_ = nn::Linear<float>(64, bins);
    Rng rng = Rng::stream(init_seed, "regression/init");
    for (auto& conv : convs_) conv.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
}

nn::Tensor RegressionNet::run(const nn::Tensor& x, Trace* trace) const {
    nn::Tensor cur = x;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        if (trace) trace->conv_in.push_back(cur);
        nn::Tensor z = convs_[l].forward(cur);
        nn::Tensor a = nn::relu_forward(z);
        nn::PoolResult<float> pool = nn::maxpool2x2_forward(a);
        cur = pool.out;
        if (trace) {
            trace->z.push_back(std::move(z));
            trace->a.push_back(std::move(a));
            trace->pools.push_back(std::move(pool));
        }
    }
    nn::Tensor gap = nn::global_avg_pool_forward(cur);
    nn::Tensor z1 = fc1_.forward(gap);
    nn::Tensor a1 = nn::relu_forward(z1);
    nn::Tensor out = fc2_.forward(a1);
    if (trace) {
        trace->gap_out = gap;
        trace->fc1_z = std::move(z1);
        trace->fc1_a = std::move(a1);
    }
    return out;
}

nn::Tensor RegressionNet::forward(const nn::Tensor& x) const { return run(x, nullptr); }

nn::Tensor RegressionNet::forward_train(const nn::Tensor& x) {
    trace_ = std::make_unique<Trace>();
    return run(x, trace_.get());
}

void RegressionNet::backward(const nn::Tensor& dy) {
    if (!trace_) throw InvalidArgument("RegressionNet::backward without forward_train");
    Trace& t = *trace_;
    nn::Tensor da1 = fc2_.backward(t.fc1_a, dy);
    nn::Tensor dz1 = nn::relu_backward(t.fc1_z, da1);
    nn::Tensor dgap = fc1_.backward(t.gap_out, dz1);
    nn::Tensor cur = nn::global_avg_pool_backward(t.pools.back().out, dgap);
    for (int l = static_cast<int>(convs_.size()) - 1; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        nn::Tensor da = nn::maxpool2x2_backward(t.pools[lu], t.a[lu], cur);
        nn::Tensor dz = nn::relu_backward(t.z[lu], da);
        cur = convs_[lu].backward(t.conv_in[lu], dz);
    }
    trace_.reset();
}

void RegressionNet::zero_grad() {
    for (auto& conv : convs_) conv.zero_grad();
    fc1_.zero_grad();
    fc2_.zero_grad();
}

std::vector<nn::ParamRef<float>> RegressionNet::param_refs() {
    std::vector<nn::ParamRef<float>> refs;
    for (auto& conv : convs_) {
        for (auto& r : conv.param_refs()) refs.push_back(r);
    }
    for (auto& r : fc1_.param_refs()) refs.push_back(r);
    for (auto& r : fc2_.param_refs()) refs.push_back(r);
    return refs;
}

std::size_t RegressionNet::param_count() const {
    std::size_t total = fc1_.param_count() + fc2_.param_count();
    for (const auto& conv : convs_) total += conv.param_count();
    return total;
}

void RegressionNet::save(const std::string& path, const std::string& meta_json) {
    const json arch{{"type", "regression"}, {"bins", bins_}};
    nn::save_checkpoint(path, arch.dump(), param_refs());
    if (!meta_json.empty()) nn::write_sidecar(path, meta_json);
}

RegressionNet RegressionNet::load(const std::string& path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    const json arch = json::parse(ckpt.arch_json);
    if (arch.at("type").get<std::string>() != "regression") {
        throw NoCheckpoint("not a regression checkpoint: " + path);
    }
    RegressionNet net(arch.at("bins").get<int>());
    nn::restore_params(ckpt, net.param_refs());
    return net;
}

HistogramPrediction predict_histogram(const RegressionNet& radii_net,
                                      const RegressionNet& freq_net, const RgbImage& seg) {
    const nn::Tensor x = pad_to_multiple(rgb_to_tensor(seg), 8);
    const nn::Tensor radii = radii_net.forward(x);
    const nn::Tensor freqs = freq_net.forward(x);
    HistogramPrediction pred;
    pred.radii.resize(static_cast<std::size_t>(radii.c));
    pred.frequencies.resize(static_cast<std::size_t>(freqs.c));
    for (int j = 0; j < radii.c; ++j) {
        pred.radii[static_cast<std::size_t>(j)] = radii.at(0, j, 0, 0);
    }
    for (int j = 0; j < freqs.c; ++j) {
        pred.frequencies[static_cast<std::size_t>(j)] =
            std::max(0.0, static_cast<double>(freqs.at(0, j, 0, 0)));
    }
    return pred;
}

double histogram_mean_radius(const HistogramPrediction& pred) {
    double mass = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < pred.radii.size() && i < pred.frequencies.size(); ++i) {
        mass += pred.frequencies[i];
        weighted += pred.frequencies[i] * pred.radii[i];
    }
    return mass > 0.0 ? weighted / mass : 0.0;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng::stream(seed, "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

template <class Sample>
nn::Tensor stack_inputs(const std::vector<Sample>& samples,
                        const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t end) {
    const nn::Tensor& first = samples[order[begin]].input;
    nn::Tensor batch(static_cast<int>(end - begin), first.c, first.h, first.w);
    for (std::size_t b = begin; b < end; ++b) {
        const nn::Tensor& src = samples[order[b]].input;
        if (src.c != first.c || src.h != first.h || src.w != first.w) {
            throw ShapeMismatch("training batch: inconsistent sample shapes");
        }
        std::copy(src.data.begin(), src.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>((b - begin) * src.size()));
    }
    return batch;
}

/// Parameter snapshot used to retain the best-validation weights.
std::vector<std::vector<float>> snapshot(const std::vector<nn::ParamRef<float>>& refs) {
    std::vector<std::vector<float>> snap;
    snap.reserve(refs.size());
    for (const auto& r : refs) snap.push_back(*r.value);
    return snap;
}

void restore(const std::vector<nn::ParamRef<float>>& refs,
             const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
}

} // namespace

TrainCurve train_cedn(Cedn& net, const std::vector<CednSample>& train,
                      const std::vector<CednSample>& val, const TrainConfig& cfg,
                      LossKind loss) {
    if (train.empty()) throw EmptyDataset("train_cedn: empty training set");
    if (loss == LossKind::Ce) throw InvalidArgument("train_cedn: use Bce or Mse");
    TrainCurve curve;
    nn::Adam<float> adam(cfg.lr);
    const auto refs = net.param_refs();
    std::vector<std::vector<float>> best;
    double best_val = std::numeric_limits<double>::infinity();

    auto batch_targets = [&](const std::vector<std::size_t>& order, std::size_t b0,
                             std::size_t b1) {
        const nn::Tensor& first = train[order[b0]].target;
        nn::Tensor t(static_cast<int>(b1 - b0), first.c, first.h, first.w);
        for (std::size_t b = b0; b < b1; ++b) {
            const nn::Tensor& src = train[order[b]].target;
            std::copy(src.data.begin(), src.data.end(),
                      t.data.begin() + static_cast<std::ptrdiff_t>((b - b0) * src.size()));
        }
        return t;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < train.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 = std::min(train.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const nn::Tensor x = stack_inputs(train, order, b0, b1);
            const nn::Tensor t = batch_targets(order, b0, b1);
            net.zero_grad();
            const nn::Tensor y = net.forward_train(x);
            const auto l = loss == LossKind::Bce ? nn::bce_loss(y, t) : nn::mse_loss(y, t);
            net.backward(l.grad);
            adam.step(refs);
            loss_sum += l.value * static_cast<double>(b1 - b0);
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(train.size()));

        if (!val.empty()) {
            double vsum = 0.0;
            for (const CednSample& s : val) {
                const nn::Tensor y = net.forward(s.input);
                const auto l = loss == LossKind::Bce ? nn::bce_loss(y, s.target)
                                                     : nn::mse_loss(y, s.target);
                vsum += l.value;
            }
            const double vloss = vsum / static_cast<double>(val.size());
            curve.val_loss.push_back(vloss);
            if (vloss < best_val) {
                best_val = vloss;
                best = snapshot(refs);
                curve.best_epoch = epoch;
            }
        }
    }
    if (!best.empty()) restore(refs, best);
    if (curve.best_epoch < 0) curve.best_epoch = cfg.epochs - 1;
    return curve;
}

TrainCurve train_classifier(Classifier& net, const std::vector<LabeledSample>& train,
                            const std::vector<LabeledSample>& val, const TrainConfig& cfg) {
    if (train.empty()) throw EmptyDataset("train_classifier: empty training set");
    TrainCurve curve;
    nn::Adam<float> adam(cfg.lr);
    const auto refs = net.param_refs();
    std::vector<std::vector<float>> best;
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < train.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 = std::min(train.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const nn::Tensor x = stack_inputs(train, order, b0, b1);
            std::vector<int> labels;
            labels.reserve(b1 - b0);
            for (std::size_t b = b0; b < b1; ++b) labels.push_back(train[order[b]].label);
            net.zero_grad();
            const nn::Tensor probs = net.forward_train(x);
            const auto l = nn::ce_loss(probs, labels);
            net.backward(l.grad);
            adam.step(refs);
            loss_sum += l.value * static_cast<double>(b1 - b0);
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(train.size()));

        if (!val.empty()) {
            double vsum = 0.0;
            for (const LabeledSample& s : val) {
                const nn::Tensor probs = net.forward(s.input);
                vsum += nn::ce_loss(probs, {s.label}).value;
            }
            const double vloss = vsum / static_cast<double>(val.size());
            curve.val_loss.push_back(vloss);
            if (vloss < best_val) {
                best_val = vloss;
                best = snapshot(refs);
                curve.best_epoch = epoch;
            }
        }
    }
    if (!best.empty()) restore(refs, best);
    if (curve.best_epoch < 0) curve.best_epoch = cfg.epochs - 1;
    return curve;
}

TrainCurve train_regression(RegressionNet& net, const std::vector<VecSample>& train,
                            const std::vector<VecSample>& val, const TrainConfig& cfg) {
    if (train.empty()) throw EmptyDataset("train_regression: empty training set");
    TrainCurve curve;
    nn::Adam<float> adam(cfg.lr);
    const auto refs = net.param_refs();
    std::vector<std::vector<float>> best;
    double best_val = std::numeric_limits<double>::infinity();

    auto target_tensor = [&](const std::vector<VecSample>& set,
                             const std::vector<std::size_t>& order, std::size_t b0,
                             std::size_t b1) {
        nn::Tensor t(static_cast<int>(b1 - b0), net.bins(), 1, 1);
        for (std::size_t b = b0; b < b1; ++b) {
            const auto& tgt = set[order[b]].target;
            if (static_cast<int>(tgt.size()) != net.bins()) {
                throw ShapeMismatch("train_regression: target length != bins");
            }
            std::copy(tgt.begin(), tgt.end(),
                      t.data.begin() + static_cast<std::ptrdiff_t>((b - b0) * tgt.size()));
        }
        return t;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < train.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 = std::min(train.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const nn::Tensor x = stack_inputs(train, order, b0, b1);
            const nn::Tensor t = target_tensor(train, order, b0, b1);
            net.zero_grad();
            const nn::Tensor y = net.forward_train(x);
            const auto l = nn::mse_loss(y, t);
            net.backward(l.grad);
            adam.step(refs);
            loss_sum += l.value * static_cast<double>(b1 - b0);
        }
        curve.train_loss.push_back(loss_sum / static_cast<double>(train.size()));

        if (!val.empty()) {
            std::vector<std::size_t> vorder(val.size());
            for (std::size_t i = 0; i < val.size(); ++i) vorder[i] = i;
            double vsum = 0.0;
            for (std::size_t i = 0; i < val.size(); ++i) {
                const nn::Tensor y = net.forward(val[i].input);
                const nn::Tensor t = target_tensor(val, vorder, i, i + 1);
                vsum += nn::mse_loss(y, t).value;
            }
            const double vloss = vsum / static_cast<double>(val.size());
            curve.val_loss.push_back(vloss);
            if (vloss < best_val) {
                best_val = vloss;
                best = snapshot(refs);
                curve.best_epoch = epoch;
            }
        }
    }
    if (!best.empty()) restore(refs, best);
    if (curve.best_epoch < 0) curve.best_epoch = cfg.epochs - 1;
    return curve;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

PixelError pixel_error(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.width != truth.width || pred.height != truth.height) {
        throw ShapeMismatch("pixel_error: mask shapes differ");
    }
    std::int64_t black_total = 0, black_wrong = 0;
    std::int64_t white_total = 0, white_wrong = 0;
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
        if (truth.data[i]) {
            ++black_total;
            if (!pred.data[i]) ++black_wrong;
        } else {
            ++white_total;
            if (pred.data[i]) ++white_wrong;
        }
    }
    PixelError err;
    if (black_total > 0) err.black = 100.0 * static_cast<double>(black_wrong) / black_total;
    if (white_total > 0) err.white = 100.0 * static_cast<double>(white_wrong) / white_total;
    return err;
}

namespace {

int nearest_anchor(const std::uint8_t* px) {
    const auto& anchors = jet_anchor_colors();
    int best = 0;
    int best_d = std::numeric_limits<int>::max();
    for (int a = 0; a < 16; ++a) {
        const auto& c = anchors[static_cast<std::size_t>(a)];
        const int dr = static_cast<int>(px[0]) - c[0];
        const int dg = static_cast<int>(px[1]) - c[1];
        const int db = static_cast<int>(px[2]) - c[2];
        const int d = dr * dr + dg * dg + db * db;
        if (d < best_d) { // strict: ties keep the lower anchor index
            best_d = d;
            best = a;
        }
    }
    return best;
}

} // namespace

double rgb_accuracy(const RgbImage& pred, const RgbImage& truth) {
    if (pred.width != truth.width || pred.height != truth.height) {
        throw ShapeMismatch("rgb_accuracy: image shapes differ");
    }
    const std::size_t n = static_cast<std::size_t>(pred.width) * pred.height;
    std::size_t match = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nearest_anchor(pred.data.data() + 3 * i) == nearest_anchor(truth.data.data() + 3 * i)) {
            ++match;
        }
    }
    return 100.0 * static_cast<double>(match) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Conversions
// ---------------------------------------------------------------------------

nn::Tensor gray_to_tensor(const GrayImage& img) {
    nn::Tensor t(1, 1, img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        t.data[i] = static_cast<float>(img.data[i]) / 255.0f;
    }
    return t;
}

nn::Tensor rgb_to_tensor(const RgbImage& img) {
    nn::Tensor t(1, 3, img.height, img.width);
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < plane; ++i) {
        t.data[i] = static_cast<float>(img.data[3 * i]) / 255.0f;
        t.data[plane + i] = static_cast<float>(img.data[3 * i + 1]) / 255.0f;
        t.data[2 * plane + i] = static_cast<float>(img.data[3 * i + 2]) / 255.0f;
    }
    return t;
}

nn::Tensor mask_to_tensor(const BinaryMask& mask) {
    nn::Tensor t(1, 1, mask.height, mask.width);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        t.data[i] = mask.data[i] ? 1.0f : 0.0f;
    }
    return t;
}

RgbImage tensor_to_rgb(const nn::Tensor& t) {
    if (t.n != 1 || t.c != 3) throw ShapeMismatch("tensor_to_rgb: expect (1,3,h,w)");
    RgbImage img(t.w, t.h);
    const std::size_t plane = t.plane();
    for (std::size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            const float v = std::clamp(t.data[static_cast<std::size_t>(ch) * plane + i], 0.0f, 1.0f);
            img.data[3 * i + static_cast<std::size_t>(ch)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return img;
}

BinaryMask tensor_to_mask(const nn::Tensor& t, float threshold) {
    if (t.n != 1 || t.c != 1) throw ShapeMismatch("tensor_to_mask: expect (1,1,h,w)");
    BinaryMask mask(t.w, t.h);
    for (std::size_t i = 0; i < t.size(); ++i) {
        mask.data[i] = t.data[i] >= threshold ? 1 : 0;
    }
    return mask;
}

nn::Tensor pad_to_multiple(const nn::Tensor& t, int m) {
    const int nh = (t.h + m - 1) / m * m;
    const int nw = (t.w + m - 1) / m * m;
    if (nh == t.h && nw == t.w) return t;
    nn::Tensor out(t.n, t.c, nh, nw);
    for (int i = 0; i < t.n; ++i) {
        for (int j = 0; j < t.c; ++j) {
            for (int y = 0; y < nh; ++y) {
                const int sy = std::min(y, t.h - 1);
                for (int x = 0; x < nw; ++x) {
                    const int sx = std::min(x, t.w - 1);
                    out.at(i, j, y, x) = t.at(i, j, sy, sx);
                }
            }
        }
    }
    return out;
}

} // namespace microchar
