#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "params.hpp"

namespace ivusseg {

enum class ModelKind { vgg16_unet, simple_unet };

enum class LayerKind { conv, prelu, maxpool, upsample, concat, sigmoid };

struct LayerSpec {
    LayerKind kind;
    std::string name;      // stable id; conv/prelu parameters live under it
    int kernel = 0;        // conv only
    int filters = 0;       // conv only
    int skip_source = -1;  // concat only: index of the encoder layer to merge
};

struct ArchConfig {
    ModelKind kind = ModelKind::vgg16_unet;
    int kernel_size = 3;
    // Width knob. For vgg16_unet this is the first-block filter count
    // (64 = the published stack; 16 = the reduced-width variant). For
    // simple_unet it is the level-1 filter count, default 16.
    int base_filters = 64;
    int input_size = 224;
    int in_channels = 1;
    std::uint64_t seed = 0;
};

struct SummaryRow {
    int index;
    std::string name;
    std::string kind;
    std::vector<int> out_shape;  // C,H,W for batch 1
    std::size_t params;
};

struct Summary {
    std::vector<SummaryRow> rows;
    std::size_t total_params = 0;
    int conv_layers = 0;

    std::string to_text() const;
    std::string to_csv() const;
};

// Ordered layer list plus its parameter store. Built once, then forwarded
// any number of times; a built graph is read-shareable for inference.
class NetworkGraph {
public:
    NetworkGraph(ArchConfig config, std::vector<LayerSpec> layers);

    const ArchConfig& config() const { return config_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Inference: no tape, intermediates are freed as soon as possible.
    Tensor forward(const Tensor& input) const;
    // Training: builds the autodiff tape and returns the output node.
    NodePtr forward_node(const NodePtr& input) const;

    std::size_t param_count() const { return params_.param_count(); }
    int conv_layer_count() const;
    int encoder_conv_count() const;
    Summary summary() const;

    // Channel count produced by each layer (shape inference, batch-free).
    std::vector<int> layer_channels() const;

private:
    void init_params();
    void check_input(const Tensor& input) const;

    ArchConfig config_;
    std::vector<LayerSpec> layers_;
    ParamStore params_;
};

// The 5-block VGG16 encoder (13 convs, filter schedule 64,64 | 128,128 |
// 256x3 | 512x3 | 512x3 scaled by base_filters/64) with a mirrored 5-block
// decoder (3 convs per block) joined by channel concatenation, a final
// 1-filter conv and sigmoid: 29 conv layers at base 64.
NetworkGraph build_vgg16_unet(const ArchConfig& config);

// Classic 5-level U-Net topology, 2 convs per level each side, filter
// counts (base, 2b, 4b, 8b, 16b).
NetworkGraph build_simple_unet(const ArchConfig& config);

NetworkGraph build_model(const ArchConfig& config);

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

} // namespace ivusseg
