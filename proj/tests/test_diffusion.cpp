#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "mcam/diffusion.hpp"
#include "mcam/errors.hpp"
#include "mcam/tensor_io.hpp"
#include "test_util.hpp"

using namespace mcam;
using namespace mcam::testing;

TEST_CASE("single-step schedule") {
    const auto s = schedule_from_betas({0.5});
    CHECK(s.T == 1);
    CHECK(s.alpha_bar_at(1) == 0.5);
    CHECK(s.alpha_bar_at(0) == 1.0);
}

TEST_CASE("linear schedule terminal alpha_bar matches an independent product") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    // Frozen from a 40-digit cumulative product of (1 - beta_i).
    const double expected = 4.035829765375683e-05;
    CHECK(std::abs(s.alpha_bar_at(1000) - expected) / expected < 1e-10);
    CHECK(s.alpha_bar_at(1000) < 0.05);
    CHECK(s.beta_at(1) == doctest::Approx(1e-4));
    CHECK(s.beta_at(1000) == doctest::Approx(2e-2));
    // Cumulative-product invariant, recomputed term by term.
    double prod = 1.0;
    for (int64_t t = 1; t <= 1000; ++t) {
        prod *= 1.0 - s.beta_at(t);
        REQUIRE(std::abs(s.alpha_bar_at(t) - prod) <= 1e-10 * prod);
    }
}

TEST_CASE("schedules are strictly decreasing") {
    for (auto kind : {ScheduleKind::Linear, ScheduleKind::ScaledLinear})
        for (int64_t T : {1, 2, 10, 1000}) {
            const auto s = build_schedule(T, kind, 1e-3, 0.3);
            CHECK_NOTHROW(s.validate());
            for (int64_t t = 1; t <= T; ++t) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
        }
}

TEST_CASE("schedule parameter errors name the bound") {
    CHECK_THROWS_WITH_AS(build_schedule(0, ScheduleKind::Linear, 1e-4, 2e-2), doctest::Contains("T"), ParameterError);
    CHECK_THROWS_WITH_AS(build_schedule(10, ScheduleKind::Linear, 0.0, 2e-2), doctest::Contains("beta_min"), ParameterError);
    CHECK_THROWS_WITH_AS(build_schedule(10, ScheduleKind::Linear, 1e-4, 1.0), doctest::Contains("beta_max"), ParameterError);
    CHECK_THROWS_WITH_AS(build_schedule(10, ScheduleKind::Linear, 0.2, 0.1), doctest::Contains("beta_min"), ParameterError);
}

TEST_CASE("forward noise coefficient edge cases") {
    const Tensor z0 = random_tensor({1, 3, 2, 4, 4}, 1);
    const Tensor eps = random_tensor({1, 3, 2, 4, 4}, 2);
    CHECK(forward_noise_coeff(z0, eps, 1.0).bitwise_equal(z0));
    const Tensor half = forward_noise_coeff(z0, Tensor::zeros(z0.shape()), 0.25);
    for (int64_t i = 0; i < z0.numel(); ++i) CHECK(half[i] == 0.5f * z0[i]);
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    const LatentVideo out = forward_noise(LatentVideo(z0), LatentVideo(eps), 400, s);
    CHECK(out.step == 400);
    CHECK_THROWS_AS(forward_noise(LatentVideo(z0), LatentVideo(random_tensor({1, 3, 2, 4, 5}, 3)), 1, s), DimensionError);
}

TEST_CASE("forward noise moments over 10^4 draws") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    const Tensor z0 = random_tensor({1, 2, 1, 2, 2}, 5);
    Rng pick(17);
    for (int k = 0; k < 5; ++k) {
        const int64_t t = pick.randint(1, 1000);
        const double ab = s.alpha_bar_at(t);
        const int n = 10000;
        std::vector<double> sum(static_cast<size_t>(z0.numel())), sq(sum.size());
        Rng rng(100 + k);
        for (int d = 0; d < n; ++d) {
            const Tensor zt = forward_noise(LatentVideo(z0), LatentVideo(rng.normal_tensor(z0.shape())), t, s).data;
            for (int64_t i = 0; i < z0.numel(); ++i) {
                sum[i] += zt[i];
                sq[i] += static_cast<double>(zt[i]) * zt[i];
            }
        }
        for (int64_t i = 0; i < z0.numel(); ++i) {
            const double mean = sum[i] / n;
            const double var = sq[i] / n - mean * mean;
            const double expect_var = 1.0 - ab;
            INFO("t=" << t << " element " << i);
            CHECK(std::abs(mean - std::sqrt(ab) * z0[i]) <= 3.0 * std::sqrt(expect_var / n));
            // Standard error of a Gaussian sample variance: sigma^2 sqrt(2 / (n - 1)).
            CHECK(std::abs(var - expect_var) <= 3.0 * expect_var * std::sqrt(2.0 / (n - 1)));
        }
    }
}

TEST_CASE("training loss with oracle predictors") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    const LatentVideo z0(random_tensor({2, 3, 2, 4, 4}, 9));
    const std::vector<int64_t> ts{10, 700};
    // Recovers the exact noise from z_t and the known z0.
    auto true_eps = [&](const Var& zt, std::span<const int64_t> t, float offset) {
        Tensor e(zt.shape());
        const int64_t per = e.numel() / 2;
        for (int64_t b = 0; b < 2; ++b) {
            const double ab = s.alpha_bar_at(t[b]);
            for (int64_t i = b * per; i < (b + 1) * per; ++i)
                e[i] = static_cast<float>((zt.value()[i] - std::sqrt(ab) * z0.data[i]) / std::sqrt(1.0 - ab)) + offset;
        }
        return ag::constant(e);
    };
    Rng rng(4);
    const float perfect =
        training_loss([&](const Var& zt, std::span<const int64_t> t) { return true_eps(zt, t, 0.0f); }, z0, ts, s, rng)
            .value()[0];
    CHECK(perfect == doctest::Approx(0.0).epsilon(0).scale(1.0).epsilon(1e-9));
    CHECK(perfect < 1e-9);
    Rng rng2(4);
    const float shifted =
        training_loss([&](const Var& zt, std::span<const int64_t> t) { return true_eps(zt, t, 0.3f); }, z0, ts, s, rng2)
            .value()[0];
    CHECK(shifted == doctest::Approx(0.09).epsilon(1e-4));
}

TEST_CASE("training loss is deterministic and rejects non-finite predictions") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    DenoiserNet net(tiny_unet(), small_vocab(), 3);
    const LatentVideo z0(random_tensor({1, 3, 2, 8, 8}, 9));
    const std::vector<int64_t> ts{321};
    const Var text = stack_text({net.text_embedder().embed_var("field and blue sky")});
    Rng a(42), b(42);
    const float la = training_loss(net, z0, ts, text, nullptr, nullptr, s, a).value()[0];
    const float lb = training_loss(net, z0, ts, text, nullptr, nullptr, s, b).value()[0];
    CHECK(la == lb);
    Rng c(1);
    auto nan_pred = [](const Var& zt, std::span<const int64_t>) { return ag::constant(Tensor(zt.shape(), NAN)); };
    CHECK_THROWS_WITH_AS(training_loss(nan_pred, z0, ts, s, c, 17), doctest::Contains("step 17"), NumericError);
}

TEST_CASE("DDIM timesteps") {
    const auto ts = ddim_timesteps(1000, 25);
    CHECK(ts.size() == 25);
    CHECK(ts.front() == 961);
    CHECK(ts.back() == 1);
    CHECK_THROWS_AS(ddim_timesteps(10, 11), ParameterError);
}

TEST_CASE("sampler determinism, shape and hook transparency") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    DenoiserNet net(tiny_unet(), small_vocab(), 3);
    randomize_parameters(net.parameters(), 8, 0.05f);
    const TextEmbedding text = net.text_embedder().embed("field and blue sky");
    SamplerConfig cfg;
    cfg.steps = 5;
    cfg.guidance = 0.0f;
    const Shape shape{1, 3, 3, 8, 8};
    Rng r1(7), r2(7), r3(7);
    const LatentVideo a = sample(net, shape, text, s, cfg, nullptr, r1);
    const LatentVideo b = sample(net, shape, text, s, cfg, nullptr, r2);
    CHECK(a.shape() == shape);
    CHECK(a.step == 0);
    CHECK(a.data.bitwise_equal(b.data));
    int calls = 0;
    const LatentVideo c = sample(net, shape, text, s, cfg, [&](LatentVideo&, int64_t) { ++calls; }, r3);
    CHECK(calls == 5);
    CHECK(c.data.bitwise_equal(a.data));
    for (Shape other : {Shape{2, 3, 1, 8, 8}, Shape{1, 3, 4, 16, 16}}) {
        Rng r(1);
        CHECK(sample(net, other, text, s, cfg, nullptr, r).shape() == other);
    }
    cfg.steps = 1001;
    Rng r4(7);
    CHECK_THROWS_AS(sample(net, shape, text, s, cfg, nullptr, r4), ParameterError);
}

TEST_CASE("guidance 1 equals the conditional prediction; stochastic mode consumes extra noise") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    DenoiserNet net(tiny_unet(), small_vocab(), 3);
    randomize_parameters(net.parameters(), 8, 0.05f);
    const TextEmbedding text = net.text_embedder().embed("large fields");
    SamplerConfig cfg;
    cfg.steps = 4;
    Rng r1(3), r2(3);
    const LatentVideo plain = sample(net, {1, 3, 2, 8, 8}, text, s, cfg, nullptr, r1);
    cfg.guidance = 3.0f;
    const LatentVideo guided = sample(net, {1, 3, 2, 8, 8}, text, s, cfg, nullptr, r2);
    CHECK_FALSE(plain.data.bitwise_equal(guided.data));
    cfg.guidance = 1.0f;
    cfg.stochastic = true;
    Rng r3(3), r4(3);
    const LatentVideo sto_a = sample(net, {1, 3, 2, 8, 8}, text, s, cfg, nullptr, r3);
    const LatentVideo sto_b = sample(net, {1, 3, 2, 8, 8}, text, s, cfg, nullptr, r4);
    CHECK(sto_a.data.bitwise_equal(sto_b.data));
    CHECK_FALSE(sto_a.data.bitwise_equal(plain.data));
}

TEST_CASE("first-frame trajectory hook pins the decoded first frame") {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    DenoiserNet net(tiny_unet(), small_vocab(), 3);
    randomize_parameters(net.parameters(), 8, 0.05f);
    const PixelCodec codec;
    const TextEmbedding text = net.text_embedder().embed("field");
    const Tensor target_image = random_tensor({8, 8, 3}, 77, 0.1f, 0.9f);
    const Tensor x0 = codec.encode_frame(target_image);
    Rng noise_rng(5);
    const Tensor eps = noise_rng.normal_tensor(x0.shape());
    SamplerConfig cfg;
    cfg.clip_min = codec.latent_min();
    cfg.clip_max = codec.latent_max();
    auto hook = [&](LatentVideo& z, int64_t t) { z.set_frame(0, 0, forward_noise_coeff(x0, eps, s.alpha_bar_at(t))); };
    Rng rng(9);
    const LatentVideo z = sample(net, {1, 3, 4, 8, 8}, text, s, cfg, hook, rng);
    const VideoClip decoded = codec.decode(z);
    const Tensor reference = codec.decode_frame(x0);
    double err = 0;
    const Tensor first = decoded.frame(0);
    for (int64_t i = 0; i < first.numel(); ++i) err += std::abs(first[i] - reference[i]);
    err /= static_cast<double>(first.numel());
    CHECK(err < 0.05);
}

TEST_CASE("pixel codecs round-trip") {
    const VideoClip clip = random_clip(3, 8, 8, 21);
    const PixelCodec identity;
    CHECK(identity.name() == "identity");
    CHECK(identity.tolerance() == 0.0f);
    CHECK(identity.decode(identity.encode(clip)).frames.bitwise_equal(clip.frames));
    for (const char* name : {"pixel:s2", "pixel:s2:centered", "pixel:s4:centered"}) {
        const auto codec = make_codec(name);
        CHECK(codec->name() == name);
        const LatentVideo z = codec->encode(clip);
        CHECK(z.channels() == codec->latent_channels());
        CHECK(z.height() == 8 / codec->downscale());
        CHECK(max_abs_diff(codec->decode(z).frames, clip.frames) <= codec->tolerance());
    }
    CHECK_THROWS_AS(make_codec("vae"), ParameterError);
}

TEST_CASE("MCAMTENS byte layout and round-trip") {
    const Tensor t(Shape{2, 1}, std::vector<float>{1.0f, -2.5f});
    const auto bytes = encode_tensor(t);
    REQUIRE(bytes.size() == 8 + 4 + 2 * 8 + 2 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "MCAMTENS");
    CHECK(bytes[8] == 2);
    CHECK(bytes[9] == 0);
    CHECK(bytes[12] == 2);
    CHECK(bytes[20] == 1);
    // 1.0f = 0x3f800000 little-endian
    CHECK(bytes[28] == 0x00);
    CHECK(bytes[31] == 0x3f);
    CHECK(decode_tensor(bytes).bitwise_equal(t));
    std::vector<uint8_t> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_tensor(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_tensor(bad), FormatError);
}

TEST_CASE("checkpoint directory round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mcam_test_ckpt";
    std::filesystem::remove_all(dir);
    Checkpoint c;
    c.stage = "BASE_VG";
    c.seed = 99;
    c.meta = {{"schedule", build_schedule(10, ScheduleKind::Linear, 1e-3, 0.2)}};
    c.loss_history = {0.5, 0.25};
    c.tensors["enc.0.weight"] = random_tensor({3, 4}, 1);
    c.tensors["scalar"] = Tensor::scalar(NAN);
    save_checkpoint(c, dir);
    const Checkpoint d = load_checkpoint(dir);
    CHECK(d.stage == c.stage);
    CHECK(d.seed == 99);
    CHECK(d.loss_history == c.loss_history);
    CHECK(d.meta["schedule"]["T"] == 10);
    REQUIRE(d.tensors.size() == 2);
    for (const auto& [name, t] : c.tensors) CHECK(d.tensors.at(name).bitwise_equal(t));
    std::filesystem::remove(dir / "tensors" / "scalar.bin");
    CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);
    std::filesystem::remove_all(dir);
}
