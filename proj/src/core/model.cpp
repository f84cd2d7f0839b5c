#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "rng.hpp"

namespace ivusseg {

namespace {

void check_arch(const ArchConfig& c) {
    if (c.kernel_size < 1 || c.kernel_size % 2 == 0)
        throw ConfigError("kernel size must be odd and >= 1, got " +
                          std::to_string(c.kernel_size));
    if (c.input_size < 32 || c.input_size % 32 != 0)
        throw ConfigError("input size must be a positive multiple of 32 (five 2x poolings), got " +
                          std::to_string(c.input_size));
    if (c.in_channels < 1)
        throw ConfigError("input channel count must be >= 1");
    if (c.base_filters < 0)
        throw ConfigError("base filter count must be positive");
}

struct LayerBuilder {
    std::vector<LayerSpec> layers;

    int conv_prelu(const std::string& name, int filters, int kernel) {
        layers.push_back({LayerKind::conv, name, kernel, filters, -1});
        layers.push_back({LayerKind::prelu, name + "_act", 0, 0, -1});
        return static_cast<int>(layers.size()) - 1;  // index of the activation
    }
    void pool(const std::string& name) {
        layers.push_back({LayerKind::maxpool, name, 0, 0, -1});
    }
    void upsample(const std::string& name) {
        layers.push_back({LayerKind::upsample, name, 0, 0, -1});
    }
    void concat(const std::string& name, int skip_source) {
        layers.push_back({LayerKind::concat, name, 0, 0, skip_source});
    }
    void final_conv(const std::string& name, int kernel) {
        layers.push_back({LayerKind::conv, name, kernel, 1, -1});
        layers.push_back({LayerKind::sigmoid, name + "_sigmoid", 0, 0, -1});
    }
};

} // namespace

NetworkGraph build_vgg16_unet(const ArchConfig& config) {
    ArchConfig c = config;
    c.kind = ModelKind::vgg16_unet;
    if (c.base_filters == 0) c.base_filters = 64;
    check_arch(c);

    // Width multiples of the VGG16 conv stack, per block.
    const std::vector<std::vector<int>> enc_mult = {{1, 1}, {2, 2}, {4, 4, 4}, {8, 8, 8}, {8, 8, 8}};

    LayerBuilder b;
    std::vector<int> skip;  // activation index of each encoder block's last conv
    for (int blk = 0; blk < 5; ++blk) {
        int last = -1;
        for (std::size_t i = 0; i < enc_mult[blk].size(); ++i)
            last = b.conv_prelu("enc" + std::to_string(blk + 1) + "_conv" + std::to_string(i + 1),
                                enc_mult[blk][i] * c.base_filters, c.kernel_size);
        skip.push_back(last);
        b.pool("pool" + std::to_string(blk + 1));
    }
    // Decoder mirrors the encoder block widths, three convs per block.
    const int dec_mult[5] = {8, 8, 4, 2, 1};
    for (int blk = 5; blk >= 1; --blk) {
        b.upsample("up" + std::to_string(blk));
        b.concat("skip" + std::to_string(blk), skip[blk - 1]);
        for (int i = 1; i <= 3; ++i)
            b.conv_prelu("dec" + std::to_string(blk) + "_conv" + std::to_string(i),
                         dec_mult[5 - blk] * c.base_filters, c.kernel_size);
    }
    b.final_conv("final_conv", c.kernel_size);

    return NetworkGraph(c, std::move(b.layers));
}

NetworkGraph build_simple_unet(const ArchConfig& config) {
    ArchConfig c = config;
    c.kind = ModelKind::simple_unet;
    if (c.base_filters == 0) c.base_filters = 16;
    check_arch(c);

    LayerBuilder b;
    std::vector<int> skip;
    for (int lvl = 1; lvl <= 4; ++lvl) {
        const int f = c.base_filters << (lvl - 1);
        b.conv_prelu("enc" + std::to_string(lvl) + "_conv1", f, c.kernel_size);
        skip.push_back(b.conv_prelu("enc" + std::to_string(lvl) + "_conv2", f, c.kernel_size));
        b.pool("pool" + std::to_string(lvl));
    }
    const int fb = c.base_filters << 4;
    b.conv_prelu("mid_conv1", fb, c.kernel_size);
    b.conv_prelu("mid_conv2", fb, c.kernel_size);
    for (int lvl = 4; lvl >= 1; --lvl) {
        const int f = c.base_filters << (lvl - 1);
        b.upsample("up" + std::to_string(lvl));
        b.concat("skip" + std::to_string(lvl), skip[lvl - 1]);
        b.conv_prelu("dec" + std::to_string(lvl) + "_conv1", f, c.kernel_size);
        b.conv_prelu("dec" + std::to_string(lvl) + "_conv2", f, c.kernel_size);
    }
    b.final_conv("final_conv", c.kernel_size);

    return NetworkGraph(c, std::move(b.layers));
}

NetworkGraph build_model(const ArchConfig& config) {
    return config.kind == ModelKind::vgg16_unet ? build_vgg16_unet(config)
                                                : build_simple_unet(config);
}

NetworkGraph::NetworkGraph(ArchConfig config, std::vector<LayerSpec> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
    init_params();
}

std::vector<int> NetworkGraph::layer_channels() const {
    std::vector<int> channels(layers_.size());
    int cur = config_.in_channels;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        switch (l.kind) {
            case LayerKind::conv: cur = l.filters; break;
            case LayerKind::concat: cur += channels[l.skip_source]; break;
            default: break;
        }
        channels[i] = cur;
    }
    return channels;
}

void NetworkGraph::init_params() {
    auto rng = make_rng(config_.seed, /*salt=*/0x9a2d);
    int in_c = config_.in_channels;
    const auto channels = layer_channels();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (l.kind == LayerKind::conv) {
            const int fan_in = in_c * l.kernel * l.kernel;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            Tensor w({l.filters, in_c, l.kernel, l.kernel});
            for (std::size_t k = 0; k < w.numel(); ++k) w[k] = dist(rng);
            params_.add(l.name + ".w", std::move(w));
            params_.add(l.name + ".b", Tensor({l.filters}));
        } else if (l.kind == LayerKind::prelu) {
            params_.add(l.name + ".alpha", Tensor::scalar(0.25));
        }
        in_c = channels[i];
    }
}

void NetworkGraph::check_input(const Tensor& input) const {
    if (input.rank() != 4)
        throw DimError("forward: input must be 4-axis (N,C,H,W), got " + input.shape_str());
    if (input.dim(1) != config_.in_channels)
        throw DimError("forward: expected " + std::to_string(config_.in_channels) +
                       " input channels, got " + std::to_string(input.dim(1)));
    if (input.dim(2) % 32 != 0 || input.dim(3) % 32 != 0)
        throw DimError("forward: input height and width must be multiples of 32, got " +
                       input.shape_str());
}

Tensor NetworkGraph::forward(const Tensor& input) const {
    check_input(input);

    // Last layer that reads each output, so intermediates can be dropped.
    std::vector<int> last_use(layers_.size(), -1);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i > 0) last_use[i - 1] = static_cast<int>(i);
        if (layers_[i].kind == LayerKind::concat)
            last_use[layers_[i].skip_source] =
                std::max(last_use[layers_[i].skip_source], static_cast<int>(i));
    }

    std::vector<Tensor> outs(layers_.size());
    const Tensor* cur = &input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        Tensor y;
        try {
            switch (l.kind) {
                case LayerKind::conv:
                    y = ops::conv2d(*cur, params_.get(l.name + ".w")->value,
                                    params_.get(l.name + ".b")->value, 1, ops::Padding::same);
                    break;
                case LayerKind::prelu:
                    y = ops::prelu(*cur, params_.get(l.name + ".alpha")->value);
                    break;
                case LayerKind::maxpool:
                    y = ops::maxpool2(*cur, nullptr);
                    break;
                case LayerKind::upsample:
                    y = ops::upsample2_nearest(*cur);
                    break;
                case LayerKind::concat:
                    y = ops::concat_channels(outs[l.skip_source], *cur);
                    break;
                case LayerKind::sigmoid:
                    y = ops::sigmoid(*cur);
                    break;
            }
        } catch (const DimError& e) {
            throw DimError("layer '" + l.name + "': " + e.what());
        }
        outs[i] = std::move(y);
        cur = &outs[i];
        // Free everything no longer needed (never the newest output).
        for (std::size_t j = 0; j < i; ++j)
            if (!outs[j].empty() && last_use[j] <= static_cast<int>(i)) outs[j] = Tensor();
    }
    return std::move(outs.back());
}

NodePtr NetworkGraph::forward_node(const NodePtr& input) const {
    check_input(input->value);
    std::vector<NodePtr> outs(layers_.size());
    NodePtr cur = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        try {
            switch (l.kind) {
                case LayerKind::conv:
                    cur = graph::conv2d(cur, params_.get(l.name + ".w"),
                                        params_.get(l.name + ".b"), 1, ops::Padding::same);
                    break;
                case LayerKind::prelu:
                    cur = graph::prelu(cur, params_.get(l.name + ".alpha"));
                    break;
                case LayerKind::maxpool:
                    cur = graph::maxpool2(cur);
                    break;
                case LayerKind::upsample:
                    cur = graph::upsample2_nearest(cur);
                    break;
                case LayerKind::concat:
                    cur = graph::concat_channels(outs[l.skip_source], cur);
                    break;
                case LayerKind::sigmoid:
                    cur = graph::sigmoid(cur);
                    break;
            }
        } catch (const DimError& e) {
            throw DimError("layer '" + l.name + "': " + e.what());
        }
        outs[i] = cur;
    }
    return cur;
}

int NetworkGraph::conv_layer_count() const {
    return static_cast<int>(std::count_if(layers_.begin(), layers_.end(),
                                          [](const LayerSpec& l) { return l.kind == LayerKind::conv; }));
}

int NetworkGraph::encoder_conv_count() const {
    int n = 0;
    for (const LayerSpec& l : layers_) {
        if (l.kind == LayerKind::upsample) break;
        if (l.kind == LayerKind::conv) ++n;
    }
    return n;
}

Summary NetworkGraph::summary() const {
    Summary s;
    const auto channels = layer_channels();
    int in_c = config_.in_channels;
    int h = config_.input_size, w = config_.input_size;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        std::size_t p = 0;
        std::string kind;
        switch (l.kind) {
            case LayerKind::conv:
                kind = "conv" + std::to_string(l.kernel) + "x" + std::to_string(l.kernel);
                p = static_cast<std::size_t>(l.filters) * in_c * l.kernel * l.kernel + l.filters;
                ++s.conv_layers;
                break;
            case LayerKind::prelu: kind = "prelu"; p = 1; break;
            case LayerKind::maxpool: kind = "maxpool2"; h /= 2; w /= 2; break;
            case LayerKind::upsample: kind = "upsample2"; h *= 2; w *= 2; break;
            case LayerKind::concat: kind = "concat"; break;
            case LayerKind::sigmoid: kind = "sigmoid"; break;
        }
        s.rows.push_back({static_cast<int>(i), l.name, kind, {channels[i], h, w}, p});
        s.total_params += p;
        in_c = channels[i];
    }
    return s;
}

std::string Summary::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(5) << "#" << std::setw(22) << "layer" << std::setw(12)
       << "kind" << std::setw(18) << "output (CxHxW)" << std::right << std::setw(12)
       << "params" << '\n';
    os << std::string(69, '-') << '\n';
    for (const SummaryRow& r : rows) {
        std::ostringstream shape;
        shape << r.out_shape[0] << 'x' << r.out_shape[1] << 'x' << r.out_shape[2];
        os << std::left << std::setw(5) << r.index << std::setw(22) << r.name
           << std::setw(12) << r.kind << std::setw(18) << shape.str() << std::right
           << std::setw(12) << r.params << '\n';
    }
    os << std::string(69, '-') << '\n';
    os << "conv layers: " << conv_layers << '\n';
    os << "total trainable parameters: " << total_params << '\n';
    return os.str();
}

std::string Summary::to_csv() const {
    std::ostringstream os;
    os << "index,layer,kind,out_channels,out_height,out_width,params\n";
    for (const SummaryRow& r : rows)
        os << r.index << ',' << r.name << ',' << r.kind << ',' << r.out_shape[0] << ','
           << r.out_shape[1] << ',' << r.out_shape[2] << ',' << r.params << '\n';
    os << "total,,,,,," << total_params << '\n';
    return os.str();
}

std::string model_kind_name(ModelKind kind) {
    return kind == ModelKind::vgg16_unet ? "vgg16_unet" : "simple_unet";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "vgg16_unet") return ModelKind::vgg16_unet;
    if (name == "simple_unet") return ModelKind::simple_unet;
    throw ConfigError("unknown model kind '" + name + "' (expected vgg16_unet or simple_unet)");
}

} // namespace ivusseg
