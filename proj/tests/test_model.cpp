#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "lipar/model.hpp"

using namespace lipar;
using namespace lipar::model;
using lipar::test::TempDir;

TEST_SUITE_BEGIN("model");

namespace {

std::vector<can::Window> demo_windows(size_t per_class = 2, uint64_t seed = 3) {
    return lipar::test::synthetic_window_mix(per_class, seed);
}

bool same_bits(const nn::Tensor& a, const nn::Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.raw(), b.raw(), static_cast<size_t>(a.numel()) * sizeof(float)) == 0;
}

} // namespace

TEST_CASE("model assembles three spatial branches, one temporal, one fusion head") {
    const auto st = build_stparnet(7);
    CHECK(st.branches().size() == 5);
    CHECK(st.has_branch("branch4"));
    const auto dw = build_dwparnet(7);
    CHECK(dw.branches().size() == 4);
    CHECK_FALSE(dw.has_branch("branch4"));

    // concat width feeding the fusion head: 64 + 256 + 192
    CHECK(st.branch("fusion").input_shape[0] == 512);
    CHECK(st.branch("branch1").output_shape == nn::Shape{64, 2, 2});
    CHECK(st.branch("branch2").output_shape == nn::Shape{256, 2, 2});
    CHECK(st.branch("branch3").output_shape == nn::Shape{192, 2, 2});
    // every spatial branch ends at 2x2
    for (const char* name : kSpatialBranches) {
        const auto& out = st.branch(name).output_shape;
        CHECK(out[1] == 2);
        CHECK(out[2] == 2);
    }
}

TEST_CASE("builds are seed-deterministic and variants share spatial init") {
    const auto a = build_stparnet(11);
    const auto b = build_stparnet(11);
    const auto c = build_stparnet(12);
    for (const auto& [name, entry] : a.entries()) {
        CHECK(same_bits(entry.tensor, b.entries().at(name).tensor));
    }
    bool any_diff = false;
    for (const auto& [name, entry] : a.entries())
        any_diff = any_diff || !same_bits(entry.tensor, c.entries().at(name).tensor);
    CHECK(any_diff);

    const auto dw = build_dwparnet(11);
    for (const auto& [name, entry] : dw.entries())
        CHECK(same_bits(entry.tensor, a.entries().at(name).tensor));
}

TEST_CASE("parameter names are unique and prefixed by exactly one branch") {
    const auto params = build_stparnet(1);
    std::set<std::string> names;
    for (const auto& [name, entry] : params.entries()) {
        CHECK(names.insert(name).second);
        int owners = 0;
        for (const auto& branch : params.branches())
            if (name.rfind(branch.name + ".", 0) == 0) ++owners;
        CHECK(owners == 1);
    }
}

TEST_CASE("branch forwards produce the documented shapes") {
    const auto params = build_stparnet(5);
    const auto windows = demo_windows(2, 9); // 10 windows
    nn::Tensor images = image_batch(std::span(windows.data(), 8));
    ForwardCtx ctx;
    nn::NoGradGuard guard;
    CHECK(branch_forward(params, "branch1", images, ctx).shape() == nn::Shape{8, 64, 2, 2});
    CHECK(branch_forward(params, "branch2", images, ctx).shape() == nn::Shape{8, 256, 2, 2});
    CHECK(branch_forward(params, "branch3", images, ctx).shape() == nn::Shape{8, 192, 2, 2});
    nn::Tensor sequences = sequence_batch(std::span(windows.data(), 8));
    CHECK(branch_forward(params, "branch4", sequences, ctx).shape() == nn::Shape{8, 5});
    CHECK_THROWS_AS(branch_forward(params, "branch1", sequences, ctx), ShapeError);
    CHECK_THROWS_AS(branch_forward(params, "nosuch", images, ctx), ConfigError);
}

TEST_CASE("zeroed temporal head gives uniform logits") {
    auto params = build_stparnet(5);
    for (const auto& suffix : {"weight", "bias"}) {
        auto& t = params.tensor(std::string("branch4.1.fc.") + suffix);
        std::fill(t.data().begin(), t.data().end(), 0.0f);
    }
    const auto windows = demo_windows(1, 4);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor logits = branch_forward(params, "branch4", sequence_batch(windows), ctx);
    for (float v : logits.data()) CHECK(v == 0.0f);
}

TEST_CASE("branch outputs are independent of execution order") {
    const auto params = build_stparnet(6);
    const auto windows = demo_windows(1, 5);
    nn::Tensor images = image_batch(windows);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor b3_first = branch_forward(params, "branch3", images, ctx);
    nn::Tensor b1 = branch_forward(params, "branch1", images, ctx);
    nn::Tensor b3_again = branch_forward(params, "branch3", images, ctx);
    CHECK(same_bits(b3_first, b3_again));
    (void)b1;
}

TEST_CASE("dwparnet equals the explicit branch-and-fuse pipeline") {
    const auto params = build_stparnet(21);
    const auto windows = demo_windows(1, 6);
    nn::Tensor images = image_batch(windows);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor direct = dwparnet_forward(params, images, ctx);
    const nn::Tensor features[] = {branch_forward(params, "branch1", images, ctx),
                                   branch_forward(params, "branch2", images, ctx),
                                   branch_forward(params, "branch3", images, ctx)};
    nn::Tensor composed = fusion_forward(params, nn::concat_channels(features), ctx);
    CHECK(same_bits(direct, composed));
    CHECK(direct.shape() == nn::Shape{static_cast<int64_t>(windows.size()), 5});
}

TEST_CASE("eval-mode forward is a pure function of params and input") {
    const auto params = build_stparnet(22);
    const auto windows = demo_windows(1, 7);
    nn::Tensor images = image_batch(windows);
    nn::Tensor sequences = sequence_batch(windows);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    CHECK(same_bits(stparnet_forward(params, images, sequences, ctx),
                    stparnet_forward(params, images, sequences, ctx)));
}

TEST_CASE("stparnet logits are the mean of spatial and temporal logits") {
    const auto params = build_stparnet(23);
    const auto windows = demo_windows(1, 8);
    nn::Tensor images = image_batch(windows);
    nn::Tensor sequences = sequence_batch(windows);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor combined = stparnet_forward(params, images, sequences, ctx);
    nn::Tensor spatial = dwparnet_forward(params, images, ctx);
    nn::Tensor temporal = branch_forward(params, "branch4", sequences, ctx);
    for (int64_t i = 0; i < combined.numel(); ++i)
        CHECK(combined.data()[i] == (spatial.data()[i] + temporal.data()[i]) * 0.5f);

    CHECK_THROWS_AS(stparnet_forward(params, images,
                                     sequence_batch(std::span(windows.data(), 3)), ctx),
                    ShapeError);
    const auto dw = build_dwparnet(23);
    CHECK_THROWS_AS(stparnet_forward(dw, images, sequences, ctx), ConfigError);
}

TEST_CASE("opposite logits cancel to the uniform prediction") {
    const auto params = build_stparnet(24);
    const auto windows = demo_windows(1, 9);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor spatial = dwparnet_forward(params, image_batch(windows), ctx);
    nn::Tensor mean = nn::scale(nn::add(spatial, nn::scale(spatial, -1.0f)), 0.5f);
    for (float v : mean.data()) CHECK(v == 0.0f);
}

TEST_CASE("branches are parameter-disjoint") {
    auto params = build_stparnet(31);
    const auto windows = demo_windows(1, 10);
    nn::Tensor images = image_batch(windows);
    nn::Tensor sequences = sequence_batch(windows);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    nn::Tensor b1_before = branch_forward(params, "branch1", images, ctx);
    nn::Tensor b3_before = branch_forward(params, "branch3", images, ctx);
    nn::Tensor b4_before = branch_forward(params, "branch4", sequences, ctx);
    nn::Tensor b2_before = branch_forward(params, "branch2", images, ctx);

    for (const auto& [name, entry] : params.entries())
        if (name.rfind("branch2.", 0) == 0)
            std::fill(entry.tensor.impl()->data.begin(), entry.tensor.impl()->data.end(), 0.0f);

    CHECK(same_bits(b1_before, branch_forward(params, "branch1", images, ctx)));
    CHECK(same_bits(b3_before, branch_forward(params, "branch3", images, ctx)));
    CHECK(same_bits(b4_before, branch_forward(params, "branch4", sequences, ctx)));
    CHECK_FALSE(same_bits(b2_before, branch_forward(params, "branch2", images, ctx)));
}

TEST_CASE("size report matches the analytic parameter arithmetic") {
    const auto params = build_stparnet(41);
    const auto report = size_report(params);

    // Independent counts from the closed-form layer arithmetic.
    auto conv_block = [](int64_t k, int64_t ci, int64_t co, int64_t g, bool bn) {
        int64_t n = nn::conv_param_count(static_cast<int>(k), ci, co, g) + co; // weight + bias
        if (bn) n += 2 * co;                                                   // gamma + beta
        return n;
    };
    const int64_t branch1 = conv_block(1, 3, 64, 1, true) + conv_block(3, 64, 64, 64, false) +
                            conv_block(3, 64, 64, 64, false);
    const int64_t branch2 = conv_block(1, 3, 128, 1, true) + conv_block(3, 128, 128, 128, false) +
                            conv_block(1, 128, 256, 1, true) + conv_block(3, 256, 256, 256, false);
    const int64_t branch3 = conv_block(1, 3, 32, 1, true) + conv_block(3, 32, 32, 32, false) +
                            conv_block(1, 32, 96, 1, true) + conv_block(3, 96, 96, 96, false) +
                            conv_block(1, 96, 192, 1, true) + conv_block(3, 192, 192, 192, false);
    auto lstm_params = [](int64_t f, int64_t h) { return 4 * (f + h + 1) * h; };
    const int64_t branch4 = lstm_params(9, 32) + lstm_params(32, 32) + (32 * 5 + 5);
    const int64_t fusion = conv_block(3, 512, 192, 1, true) + (192 * 5 + 5);

    CHECK(report.row("branch1").param_count == branch1);
    CHECK(report.row("branch2").param_count == branch2);
    CHECK(report.row("branch3").param_count == branch3);
    CHECK(report.row("branch4").param_count == branch4);
    CHECK(report.row("fusion").param_count == fusion);
    CHECK(report.model.param_count == branch1 + branch2 + branch3 + branch4 + fusion);

    // The temporal branch parameter block lands on the reference 0.05 MB.
    CHECK(report.row("branch4").param_mb == doctest::Approx(0.05).epsilon(0.1));

    // Totals are additive.
    double total = 0.0;
    for (const auto& row : report.rows) total += row.total_mb;
    CHECK(report.model.total_mb == doctest::Approx(total).epsilon(1e-9));
    for (const auto& row : report.rows)
        CHECK(row.total_mb == doctest::Approx(row.fwd_bwd_mb + row.param_mb).epsilon(1e-9));
}

TEST_CASE("a model with no layers reports zero sizes") {
    const ModelParams empty;
    const auto report = size_report(empty);
    CHECK(report.rows.empty());
    CHECK(report.model.param_count == 0);
    CHECK(report.model.fwd_bwd_mb == 0.0);
    CHECK(report.model.total_mb == 0.0);
}

TEST_CASE("size report is batch-invariant per sample") {
    const auto params = build_stparnet(42);
    const auto a = size_report(params, 1);
    const auto b = size_report(params, 32);
    CHECK(a.model.fwd_bwd_mb == doctest::Approx(b.model.fwd_bwd_mb));
    CHECK(a.model.param_mb == doctest::Approx(b.model.param_mb));
}

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir dir("ckpt");
    auto params = build_stparnet(51);
    // Perturb the running stats so non-trainable buffers are exercised too.
    auto& rm = params.tensor("branch1.0.bn.running_mean");
    rm.data()[0] = 0.125f;

    const auto path = dir.file("model.lipc");
    save_checkpoint(params, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.variant() == params.variant());
    CHECK(loaded.seed() == params.seed());
    REQUIRE(loaded.entries().size() == params.entries().size());
    for (const auto& [name, entry] : params.entries()) {
        CHECK(same_bits(entry.tensor, loaded.tensor(name)));
        CHECK(entry.trainable == loaded.entries().at(name).trainable);
    }

    // save -> load -> save gives a byte-identical file
    const auto path2 = dir.file("model2.lipc");
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::vector<char> b1((std::istreambuf_iterator<char>(f1)),
                               std::istreambuf_iterator<char>());
    const std::vector<char> b2((std::istreambuf_iterator<char>(f2)),
                               std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // logits agree before and after the round trip
    const auto windows = demo_windows(1, 12);
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    CHECK(same_bits(
        stparnet_forward(params, image_batch(windows), sequence_batch(windows), ctx),
        stparnet_forward(loaded, image_batch(windows), sequence_batch(windows), ctx)));
}

TEST_CASE("checkpoint corruption is rejected") {
    TempDir dir("ckpt2");
    const auto params = build_dwparnet(52);
    const auto path = dir.file("model.lipc");
    save_checkpoint(params, path);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4); // clobber the magic
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), IoError);

    save_checkpoint(params, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() / 2);
        std::ofstream out(dir.file("trunc.lipc"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir.file("trunc.lipc")), IoError);
}

TEST_SUITE_END();
