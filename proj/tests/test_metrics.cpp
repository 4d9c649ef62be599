#include "oracles.hpp"
#include "support.hpp"

#include <pwg/metrics.hpp>

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using namespace pwg;

namespace {

Image<float> constant(int h, int w, int c, float v) { return Image<float>(h, w, c, v); }

}  // namespace

TEST_CASE("relmse worked values") {
    CHECK(relmse(constant(2, 2, 3, 0.5f), constant(2, 2, 3, 1.0f)) == doctest::Approx(0.247525).epsilon(1e-6));
    CHECK(relmse(constant(2, 2, 3, 0.1f), constant(2, 2, 3, 0.0f)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(relmse(constant(3, 1, 1, 0.7f), constant(3, 1, 1, 0.7f)) == 0.0);
    CHECK_THROWS_AS(relmse(constant(2, 2, 3, 0), constant(2, 2, 1, 0)), ArgumentError);
    CHECK_THROWS_AS(relmse(Image<float>(), Image<float>()), ArgumentError);
}

TEST_CASE("smape worked values and symmetry") {
    CHECK(smape(constant(2, 2, 3, 1.0f), constant(2, 2, 3, 0.0f)) == doctest::Approx(0.990099).epsilon(1e-6));
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto a = test::random_image<float>(5, 4, 3, rng, 0, 3), b = test::random_image<float>(5, 4, 3, rng, 0, 3);
        const double ab = smape(a, b), ba = smape(b, a);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ab < 1.0);
    }
}

TEST_CASE("ssim matches a brute-force oracle") {
    Rng rng(2);
    for (int t = 0; t < 3; ++t) {
        const auto a = test::random_image<float>(16, 16, 3, rng, 0, 1);
        auto b = a;
        for (auto &v : b.vec()) v = std::clamp(v + static_cast<float>(0.2 * (rng.uniform() - 0.5)), 0.0f, 1.0f);
        CHECK(std::abs(ssim(a, b) - test::ssim_oracle(a, b)) < 1e-6);
    }
    const auto a = test::random_image<float>(12, 14, 1, rng, 0, 1);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dssim(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(constant(10, 20, 1, 0), constant(10, 20, 1, 0)), ArgumentError);
}

TEST_CASE("dssim of an anti-correlated image is positive") {
    Rng rng(3);
    const auto a = test::random_image<float>(16, 16, 1, rng, 0, 1);
    Image<float> neg = a;
    for (auto &v : neg.vec()) v = 1.0f - v;
    CHECK(dssim(a, neg) > 0.5);
    CHECK(dssim(a, neg) <= 2.0);
}

TEST_CASE("normalized scene error") {
    CHECK(normalized_scene_error({{"a", 0.5}, {"b", 1.0}}, {{"a", 1.0}, {"b", 1.0}}) == doctest::Approx(0.75));
    CHECK(normalized_scene_error({{"a", 0.2}, {"b", 0.3}, {"c", 0.9}}, {{"a", 0.4}, {"b", 0.3}, {"c", 0.3}}) ==
          doctest::Approx((0.5 + 1.0 + 3.0) / 3));
    CHECK_THROWS_AS(normalized_scene_error({{"a", 0.5}}, {{"a", 0.0}}), ArgumentError);
    CHECK_THROWS_AS(normalized_scene_error({{"a", 0.5}}, {{"b", 1.0}}), ArgumentError);
    CHECK_THROWS_AS(normalized_scene_error({}, {}), ArgumentError);
}

TEST_CASE("per-pixel means combine over concatenated images") {
    // Both relmse and smape are plain means, so the metric of a side-by-side pair is
    // the pixel-weighted mean of the two metrics.
    Rng rng(4);
    const auto a1 = test::random_image<float>(4, 3, 3, rng, 0, 2), r1 = test::random_image<float>(4, 3, 3, rng, 0, 2);
    const auto a2 = test::random_image<float>(4, 5, 3, rng, 0, 2), r2 = test::random_image<float>(4, 5, 3, rng, 0, 2);
    auto cat = [](const Image<float> &l, const Image<float> &r) {
        Image<float> out(l.height(), l.width() + r.width(), 3);
        for (int y = 0; y < l.height(); ++y)
            for (int c = 0; c < 3; ++c) {
                for (int x = 0; x < l.width(); ++x) out(y, x, c) = l(y, x, c);
                for (int x = 0; x < r.width(); ++x) out(y, l.width() + x, c) = r(y, x, c);
            }
        return out;
    };
    const auto e = cat(a1, a2), r = cat(r1, r2);
    CHECK(relmse(e, r) == doctest::Approx((3 * relmse(a1, r1) + 5 * relmse(a2, r2)) / 8).epsilon(1e-12));
    CHECK(smape(e, r) == doctest::Approx((3 * smape(a1, r1) + 5 * smape(a2, r2)) / 8).epsilon(1e-12));
    CHECK(l1_error(e, r) == doctest::Approx((3 * l1_error(a1, r1) + 5 * l1_error(a2, r2)) / 8).epsilon(1e-12));
}

TEST_CASE("metric ranges") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const auto e = test::random_image<float>(12, 12, 3, rng, 0, 4), r = test::random_image<float>(12, 12, 3, rng, 0, 4);
        const auto m = evaluate_radiance(e, r);
        CHECK(m.relmse >= 0.0);
        CHECK(m.smape >= 0.0);
        CHECK(m.smape < 1.0);
        CHECK(m.dssim >= 0.0);
        CHECK(m.dssim <= 2.0);
        CHECK(m.l1 >= 0.0);
    }
    const auto same = test::random_image<float>(12, 12, 3, rng, 0, 4);
    const auto z = evaluate_radiance(same, same);
    CHECK(z.relmse == 0.0);
    CHECK(z.smape == 0.0);
    CHECK(z.l1 == 0.0);
    CHECK(z.dssim == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metric report aggregates and serialises") {
    MetricReport rep;
    ShotMetrics a;
    a.shot = "s0";
    a.scene = "x";
    a.relmse = 0.2;
    a.dssim = 0.1;
    ShotMetrics b = a;
    b.shot = "s1";
    b.relmse = 0.4;
    ShotMetrics bad;
    bad.shot = "s2";
    bad.error = "missing reference";
    rep.shots = {a, b, bad};
    rep.normalized_relmse = {{"x", 0.5}, {"y", 1.5}};
    rep.finalize();
    CHECK(rep.failed == 1);
    CHECK(rep.mean_relmse == doctest::Approx(0.3));
    REQUIRE(rep.mean_normalized_relmse);
    CHECK(*rep.mean_normalized_relmse == doctest::Approx(1.0));

    std::ostringstream os;
    rep.write(os);
    std::istringstream is(os.str());
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(is, line);) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 6);
    CHECK(lines[2]["error"] == "missing reference");
    CHECK(lines[3]["type"] == "scene");
    CHECK(lines[5]["type"] == "aggregate");
    CHECK(lines[5]["failed"] == 1);
    CHECK(lines[5]["normalized_relmse"].get<double>() == doctest::Approx(1.0));
}
