#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <microchar/image.hpp>
#include <microchar/nn/adam.hpp>
#include <microchar/nn/ops.hpp>
#include <microchar/nn/tensor.hpp>
#include <microchar/synth.hpp>

namespace microchar {

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

/// Encoder-decoder hyperparameters. enc_filters holds the two kernel sizes of
/// every encoder level followed by the two bottleneck kernels
/// (2*levels + 2 entries); dec_filters holds one kernel per decoder level.
/// All kernel sizes come from {1,3,5,7,9}; same-padding keeps tensor shapes
/// independent of the kernel choice, which is what lets the search vary them
/// freely.
struct ArchSpec {
    int levels = 3;
    std::vector<int> channels{16, 32, 64};
    std::vector<int> enc_filters;
    std::vector<int> dec_filters;
    int out_channels = 1;

    static ArchSpec default_binary();
    static ArchSpec default_rgb();

    int searched_filter_count() const { return 3 * levels + 2; }
    std::vector<int> all_filters() const;
    void validate() const;

    std::string to_json() const;
    static ArchSpec from_json(const std::string& text);
};

// ---------------------------------------------------------------------------
// Convolutional encoder-decoder (Simple-UNet shape)
// ---------------------------------------------------------------------------

/// Encoder: levels x [conv, ReLU, conv, ReLU, maxpool]; bottleneck conv pair;
/// decoder: levels x [2x2 transpose conv, skip concat, conv, ReLU]; 1x1
/// output conv with a sigmoid head for 1 output channel, linear otherwise.
/// Input is a grayscale tensor (n,1,h,w) with h,w divisible by 2^levels.
class Cedn {
public:
    Cedn() = default;
    explicit Cedn(const ArchSpec& spec, std::uint64_t init_seed = 0);

    const ArchSpec& spec() const { return spec_; }

    nn::Tensor forward(const nn::Tensor& x) const;

    /// Training pass; activations are cached on the instance, so a Cedn being
    /// trained must be exclusively owned.
    nn::Tensor forward_train(const nn::Tensor& x);
    void backward(const nn::Tensor& dy);

    void zero_grad();
    std::vector<nn::ParamRef<float>> param_refs();
    std::size_t param_count() const;

    void save(const std::string& path, const std::string& meta_json = "");
    static Cedn load(const std::string& path);

private:
    struct Trace;
    nn::Tensor run(const nn::Tensor& x, Trace* trace) const;

    ArchSpec spec_;
    std::vector<nn::Conv2d<float>> enc_convs_; // 2 per level + 2 bottleneck
    std::vector<nn::ConvT2x2<float>> ups_;     // per level, deepest first
    std::vector<nn::Conv2d<float>> dec_convs_; // per level, deepest first
    nn::Conv2d<float> out_conv_;
    bool sigmoid_head_ = true;
    std::unique_ptr<Trace> trace_;

public:
    ~Cedn();
    Cedn(Cedn&&) noexcept;
    Cedn& operator=(Cedn&&) noexcept;
    Cedn(const Cedn&) = delete;
    Cedn& operator=(const Cedn&) = delete;
};

// ---------------------------------------------------------------------------
// Classifier CNN (pores / particles / grains)
// ---------------------------------------------------------------------------

class Classifier {
public:
    explicit Classifier(std::uint64_t init_seed = 0);

    /// Returns class probabilities (n,3,1,1); order pores, particles, grains.
    nn::Tensor forward(const nn::Tensor& x) const;

    nn::Tensor forward_train(const nn::Tensor& x);
    void backward(const nn::Tensor& dprobs);

    void zero_grad();
    std::vector<nn::ParamRef<float>> param_refs();
    std::size_t param_count() const;

    void save(const std::string& path, const std::string& meta_json = "");
    static Classifier load(const std::string& path);

private:
    struct Trace;
    nn::Tensor run(const nn::Tensor& x, Trace* trace) const;

    std::vector<nn::Conv2d<float>> convs_;
    nn::Linear<float> head_;
    std::unique_ptr<Trace> trace_;

public:
    ~Classifier();
    Classifier(Classifier&&) noexcept;
    Classifier& operator=(Classifier&&) noexcept;
    Classifier(const Classifier&) = delete;
    Classifier& operator=(const Classifier&) = delete;
};

struct ClassLabel {
    DefectClass cls = DefectClass::Grains;
    std::array<double, 3> probs{}; // pores, particles, grains
};

ClassLabel classify(const Classifier& net, const GrayImage& img);

// ---------------------------------------------------------------------------
// Regression CNNs (RGB segmentation -> histogram)
// ---------------------------------------------------------------------------

/// Small conv stack + GAP + two-layer head emitting `bins` values. One
/// instance predicts radius bin centers, a second predicts (normalized)
/// frequencies.
class RegressionNet {
public:
    explicit RegressionNet(int bins = 20, std::uint64_t init_seed = 0);

    int bins() const { return bins_; }
    nn::Tensor forward(const nn::Tensor& x) const; // (n,bins,1,1)

    nn::Tensor forward_train(const nn::Tensor& x);
    void backward(const nn::Tensor& dy);

    void zero_grad();
    std::vector<nn::ParamRef<float>> param_refs();
    std::size_t param_count() const;

    void save(const std::string& path, const std::string& meta_json = "");
    static RegressionNet load(const std::string& path);

private:
    struct Trace;
    nn::Tensor run(const nn::Tensor& x, Trace* trace) const;

    int bins_ = 20;
    std::vector<nn::Conv2d<float>> convs_;
    nn::Linear<float> fc1_, fc2_;
    std::unique_ptr<Trace> trace_;

public:
    ~RegressionNet();
    RegressionNet(RegressionNet&&) noexcept;
    RegressionNet& operator=(RegressionNet&&) noexcept;
    RegressionNet(const RegressionNet&) = delete;
    RegressionNet& operator=(const RegressionNet&) = delete;
};

struct HistogramPrediction {
    std::vector<double> radii;       ///< bin centers
    std::vector<double> frequencies; ///< clamped at 0
};

HistogramPrediction predict_histogram(const RegressionNet& radii_net,
                                      const RegressionNet& freq_net, const RgbImage& seg);

/// Frequency-weighted mean radius of a predicted histogram (0 when empty).
double histogram_mean_radius(const HistogramPrediction& pred);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class LossKind { Bce, Ce, Mse };

struct TrainConfig {
    int epochs = 10;
    double lr = 1e-3;
    int batch = 8;
    std::uint64_t seed = 1;
};

struct TrainCurve {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1; ///< epoch whose weights were retained (best val loss)
};

struct CednSample {
    nn::Tensor input;  // (1,1,h,w)
    nn::Tensor target; // (1,out_c,h,w)
};

struct LabeledSample {
    nn::Tensor input; // (1,1,h,w)
    int label = 0;
};

struct VecSample {
    nn::Tensor input;          // (1,3,h,w)
    std::vector<float> target; // length bins
};

TrainCurve train_cedn(Cedn& net, const std::vector<CednSample>& train,
                      const std::vector<CednSample>& val, const TrainConfig& cfg,
                      LossKind loss);

TrainCurve train_classifier(Classifier& net, const std::vector<LabeledSample>& train,
                            const std::vector<LabeledSample>& val, const TrainConfig& cfg);

TrainCurve train_regression(RegressionNet& net, const std::vector<VecSample>& train,
                            const std::vector<VecSample>& val, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct PixelError {
    double black = 0.0; ///< % of truth-defect pixels predicted wrong
    double white = 0.0; ///< % of truth-background pixels predicted wrong
};

/// Per-class misclassification rate; a class absent from the truth scores 0.
PixelError pixel_error(const BinaryMask& pred, const BinaryMask& truth);

/// Both images quantized to the nearest of the 16 jet anchors (L2 in RGB,
/// ties toward the lower anchor index); returns matching-pixel percent.
double rgb_accuracy(const RgbImage& pred, const RgbImage& truth);

template <class Net>
std::size_t count_params(const Net& net) {
    return net.param_count();
}

// ---------------------------------------------------------------------------
// Tensor conversions
// ---------------------------------------------------------------------------

nn::Tensor gray_to_tensor(const GrayImage& img);
nn::Tensor rgb_to_tensor(const RgbImage& img);
nn::Tensor mask_to_tensor(const BinaryMask& mask);
RgbImage tensor_to_rgb(const nn::Tensor& t);
BinaryMask tensor_to_mask(const nn::Tensor& t, float threshold = 0.5f);

/// Replicate-pads a (n,c,h,w) tensor on the bottom/right to the next multiple
/// of `m` (for fully convolutional inference at arbitrary sizes).
nn::Tensor pad_to_multiple(const nn::Tensor& t, int m);

} // namespace microchar
