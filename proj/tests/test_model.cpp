#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/model.hpp"
#include "test_support.hpp"

using namespace ivusseg;
using testsup::max_abs_diff;
using testsup::random_tensor;

namespace {

ArchConfig vgg_cfg(int kernel, int input, int base = 64) {
    ArchConfig c;
    c.kind = ModelKind::vgg16_unet;
    c.kernel_size = kernel;
    c.input_size = input;
    c.base_filters = base;
    c.seed = 1234;
    return c;
}

std::vector<int> encoder_filters(const NetworkGraph& g) {
    std::vector<int> f;
    for (const LayerSpec& l : g.layers()) {
        if (l.kind == LayerKind::upsample) break;
        if (l.kind == LayerKind::conv) f.push_back(l.filters);
    }
    return f;
}

} // namespace

TEST_CASE("vgg16-unet census: 13 encoder convs, 29 total, final 1-filter sigmoid") {
    NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 224));
    CHECK(g.encoder_conv_count() == 13);
    CHECK(g.conv_layer_count() == 29);
    CHECK(encoder_filters(g) ==
          std::vector<int>{64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512});
    // Final conv has one filter and is followed by sigmoid.
    const auto& layers = g.layers();
    const LayerSpec& last_conv = layers[layers.size() - 2];
    CHECK(last_conv.kind == LayerKind::conv);
    CHECK(last_conv.filters == 1);
    CHECK(layers.back().kind == LayerKind::sigmoid);
}

TEST_CASE("parameter counting") {
    SUBCASE("single conv layer: 9 weights + 1 bias") {
        // Checked through the summary of a graph piece is overkill; count directly.
        Tensor w({1, 1, 3, 3});
        CHECK(w.numel() + 1 == 10);
    }
    SUBCASE("vgg16 encoder at kernel 3, 1-channel input: 14,713,536") {
        NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 224));
        // Sum conv weights+biases over encoder layers only.
        std::size_t enc = 0;
        int in_c = 1;
        for (const LayerSpec& l : g.layers()) {
            if (l.kind == LayerKind::upsample) break;
            if (l.kind == LayerKind::conv) {
                enc += static_cast<std::size_t>(l.filters) * in_c * l.kernel * l.kernel +
                       l.filters;
                in_c = l.filters;
            }
        }
        CHECK(enc == 14713536u);
    }
    SUBCASE("kernel-5 preset exceeds 100 million trainable parameters") {
        NetworkGraph g = build_vgg16_unet(vgg_cfg(5, 224));
        CHECK(g.param_count() > 100000000u);
    }
    SUBCASE("kernel-weight subtotal scales as 25/9 between kernel 5 and kernel 3") {
        NetworkGraph g3 = build_vgg16_unet(vgg_cfg(3, 224));
        NetworkGraph g5 = build_vgg16_unet(vgg_cfg(5, 224));
        auto kernel_weights = [](const NetworkGraph& g) {
            std::size_t n = 0;
            for (const auto& [name, node] : g.params().items())
                if (name.ends_with(".w")) n += node->value.numel();
            return n;
        };
        const double ratio = double(kernel_weights(g5)) / double(kernel_weights(g3));
        CHECK(ratio == doctest::Approx(25.0 / 9.0).epsilon(1e-12));
    }
    SUBCASE("summary totals equal param_count") {
        NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 64));
        Summary s = g.summary();
        CHECK(s.total_params == g.param_count());
        CHECK(s.conv_layers == 29);
    }
}

TEST_CASE("simple u-net") {
    ArchConfig c;
    c.kind = ModelKind::simple_unet;
    c.kernel_size = 3;
    c.input_size = 64;
    c.base_filters = 16;
    c.seed = 7;
    NetworkGraph g = build_simple_unet(c);
    SUBCASE("first conv has 16 filters; filters double per level up to 16x base") {
        CHECK(encoder_filters(g) ==
              std::vector<int>{16, 16, 32, 32, 64, 64, 128, 128, 256, 256});
    }
    SUBCASE("forward maps 1x1x64x64 to 1x1x64x64") {
        std::mt19937_64 rng(3);
        Tensor y = g.forward(random_tensor({1, 1, 64, 64}, rng, 0.0, 1.0));
        CHECK(y.shape() == std::vector<int>{1, 1, 64, 64});
    }
    SUBCASE("fewer parameters than the vgg16 encoder variant") {
        NetworkGraph vgg = build_vgg16_unet(vgg_cfg(3, 64));
        CHECK(g.param_count() < vgg.param_count());
    }
    SUBCASE("doubling base multiplies interior conv params by 4") {
        ArchConfig c2 = c;
        c2.base_filters = 32;
        NetworkGraph g2 = build_simple_unet(c2);
        // Interior layer: enc2_conv2 (fan-in and fan-out both double).
        auto pcount = [](const NetworkGraph& g, const std::string& name) {
            return g.params().get(name + ".w")->value.numel();
        };
        CHECK(pcount(g2, "enc2_conv2") == 4 * pcount(g, "enc2_conv2"));
        CHECK(pcount(g2, "dec3_conv2") == 4 * pcount(g, "dec3_conv2"));
    }
}

TEST_CASE("builder rejects sizes not divisible by 32") {
    ArchConfig c = vgg_cfg(3, 100);
    CHECK_THROWS_WITH_AS(build_vgg16_unet(c), doctest::Contains("32"), ConfigError);
    c.input_size = 0;
    CHECK_THROWS_AS(build_vgg16_unet(c), ConfigError);
    c.input_size = 64;
    c.kernel_size = 4;
    CHECK_THROWS_AS(build_vgg16_unet(c), ConfigError);
}

TEST_CASE("forward pass") {
    NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 64, 8));  // narrow for speed
    SUBCASE("zero input collapses to a constant sigmoid-of-bias map") {
        Tensor y = g.forward(Tensor({1, 1, 64, 64}));
        CHECK(y.shape() == std::vector<int>{1, 1, 64, 64});
        for (std::size_t i = 1; i < y.numel(); ++i) CHECK(y[i] == y[0]);
    }
    SUBCASE("outputs stay strictly inside (0,1)") {
        std::mt19937_64 rng(5);
        Tensor y = g.forward(random_tensor({1, 1, 64, 64}, rng, 0.0, 1.0));
        for (std::size_t i = 0; i < y.numel(); ++i) {
            CHECK(y[i] > 0.0);
            CHECK(y[i] < 1.0);
        }
    }
    SUBCASE("bad channel count and indivisible sizes propagate as dim errors") {
        CHECK_THROWS_AS(g.forward(Tensor({1, 2, 64, 64})), DimError);
        CHECK_THROWS_AS(g.forward(Tensor({1, 1, 60, 60})), DimError);
    }
    SUBCASE("tape forward equals inference forward") {
        std::mt19937_64 rng(9);
        Tensor x = random_tensor({1, 1, 64, 64}, rng, 0.0, 1.0);
        Tensor y1 = g.forward(x);
        NodePtr y2 = g.forward_node(graph::constant(x));
        CHECK(max_abs_diff(y1, y2->value) == 0.0);
    }
}

TEST_CASE("shape invariance across valid input sizes") {
    NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 64, 4));
    std::mt19937_64 rng(11);
    for (int size : {32, 64, 96}) {
        Tensor y = g.forward(random_tensor({1, 1, size, size}, rng, 0.0, 1.0));
        CHECK(y.shape() == std::vector<int>{1, 1, size, size});
    }
}

TEST_CASE("skip compatibility is structural") {
    NetworkGraph g = build_vgg16_unet(vgg_cfg(3, 224));
    // Walk shapes: every concat's two inputs share H and W.
    Summary s = g.summary();
    for (std::size_t i = 0; i < g.layers().size(); ++i) {
        const LayerSpec& l = g.layers()[i];
        if (l.kind != LayerKind::concat) continue;
        const auto& skip_shape = s.rows[l.skip_source].out_shape;
        const auto& prev_shape = s.rows[i - 1].out_shape;
        CHECK(skip_shape[1] == prev_shape[1]);
        CHECK(skip_shape[2] == prev_shape[2]);
    }
}

TEST_CASE("same seed rebuilds bit-identical parameters") {
    NetworkGraph a = build_vgg16_unet(vgg_cfg(3, 64, 8));
    NetworkGraph b = build_vgg16_unet(vgg_cfg(3, 64, 8));
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().items().size(); ++i) {
        const auto& [an, anode] = a.params().items()[i];
        const auto& [bn, bnode] = b.params().items()[i];
        CHECK(an == bn);
        CHECK(max_abs_diff(anode->value, bnode->value) == 0.0);
    }
    ArchConfig other = vgg_cfg(3, 64, 8);
    other.seed = 999;
    NetworkGraph c = build_vgg16_unet(other);
    CHECK(max_abs_diff(a.params().items()[0].second->value,
                       c.params().items()[0].second->value) > 0.0);
}

TEST_CASE("summary rows") {
    ArchConfig c;
    c.kind = ModelKind::simple_unet;
    c.base_filters = 16;
    c.input_size = 64;
    NetworkGraph g = build_simple_unet(c);
    Summary s = g.summary();
    CHECK(s.rows.front().kind == "conv3x3");
    CHECK(s.rows.front().out_shape[0] == 16);
    const std::string text = s.to_text();
    CHECK(text.find("total trainable parameters") != std::string::npos);
    const std::string csv = s.to_csv();
    CHECK(csv.rfind("index,layer,kind,", 0) == 0);

    // Encoder block 5 of the vgg variant shows 512 channels at 1/16 input
    // resolution (before the fifth pool).
    NetworkGraph vgg = build_vgg16_unet(vgg_cfg(3, 224));
    Summary vs = vgg.summary();
    int enc5_last_act = -1;
    for (std::size_t i = 0; i < vgg.layers().size(); ++i)
        if (vgg.layers()[i].name == "enc5_conv3_act") enc5_last_act = static_cast<int>(i);
    REQUIRE(enc5_last_act >= 0);
    CHECK(vs.rows[enc5_last_act].out_shape == std::vector<int>{512, 14, 14});
}
