#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "handbio/error.hpp"
#include "handbio/imgproc.hpp"
#include "handbio/reference.hpp"
#include "handbio/rng.hpp"
#include "oracles.hpp"

using namespace handbio;
using namespace handbio::img;

namespace {

Image random_image(int h, int w, int c, Rng& rng) {
    Image img(h, w, c);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

double max_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace

TEST_CASE("box_mean: constant image stays constant at any radius") {
    const Image img = Image::constant(7, 9, 1, 0.37);
    for (int r : {1, 2, 4}) {
        const Image out = box_mean(img, r);
        for (double v : out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("box_mean: single 9 in a 3x3 image averages to 1 at the center") {
    Image img(3, 3, 1);
    img.at(1, 1) = 9.0;
    const Image out = box_mean(img, 1);
    CHECK(out.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.at(0, 0) == doctest::Approx(9.0 / 4.0).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(9.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("box_mean: matches the naive windowed mean for radii 1..5") {
    Rng rng(31);
    const Image img = random_image(16, 16, 1, rng);
    for (int r = 1; r <= 5; ++r) {
        const Image fast = box_mean(img, r);
        const Image slow = ref::box_mean(img, r);
        CHECK(max_abs_diff(fast, slow) < 1e-6);
    }
}

TEST_CASE("box_mean: degenerate window is rejected") {
    const Image img = Image::constant(4, 6, 1, 0.5);
    CHECK_THROWS_AS(box_mean(img, 4), ParamError);
    CHECK_THROWS_AS(box_mean(img, 0), ParamError);
}

TEST_CASE("guided_filter: constant image is a fixed point") {
    const Image img = Image::constant(8, 8, 1, 0.62);
    const Image out = guided_filter_self(img, {2, 0.01});
    for (double v : out.data) CHECK(v == doctest::Approx(0.62).epsilon(1e-9));
}

TEST_CASE("guided_filter: self-guided with zero regularization is the identity") {
    Rng rng(32);
    const Image img = random_image(10, 12, 1, rng);
    const Image out = guided_filter_self(img, {2, 0.0});
    CHECK(max_abs_diff(out, img) < 1e-6);
}

TEST_CASE("guided_filter: step edge matches the per-window oracle") {
    Image step(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) step.at(y, x) = x < 4 ? 0.1 : 0.9;
    const GuidedFilterParams p{2, 0.01};
    const Image fast = guided_filter(step, step, p);
    const Image slow = ref::guided_filter(step, step, p);
    CHECK(max_abs_diff(fast, slow) < 1e-6);

    Rng rng(33);
    const Image img = random_image(12, 9, 1, rng);
    const Image guide = random_image(12, 9, 1, rng);
    CHECK(max_abs_diff(guided_filter(img, guide, p), ref::guided_filter(img, guide, p)) < 1e-6);
}

TEST_CASE("guided_filter: dimension mismatch is rejected") {
    const Image a = Image::constant(8, 8, 1, 0.5);
    const Image b = Image::constant(8, 9, 1, 0.5);
    CHECK_THROWS_AS(guided_filter(a, b, {2, 0.01}), ShapeError);
}

TEST_CASE("detail_layer: constants, zero smoothed, exact division oracle") {
    const double eps = 1e-3;
    const Image c = Image::constant(4, 4, 1, 0.3);
    const Image dc = detail_layer(c, c, eps);
    for (double v : dc.data) CHECK(v == 0.3 / (0.3 + eps));

    const Image z = Image::zeros(4, 4, 1);
    const Image v = Image::constant(4, 4, 1, 0.7);
    const Image dz = detail_layer(v, z, eps);
    for (double x : dz.data) {
        CHECK(x == 0.7 / eps);
        CHECK(std::isfinite(x));
    }

    Rng rng(34);
    const Image orig = random_image(4, 4, 1, rng);
    const Image smooth = random_image(4, 4, 1, rng);
    const Image d = detail_layer(orig, smooth, eps);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(d.at(y, x) == orig.at(y, x) / (smooth.at(y, x) + eps));
            CHECK(d.at(y, x) >= 0.0);
        }

    CHECK_THROWS_AS(detail_layer(orig, smooth, 0.0), ParamError);
    CHECK_THROWS_AS(detail_layer(orig, Image::zeros(5, 4, 1), eps), ShapeError);
}

TEST_CASE("rgb_to_luma: coefficient checks and exact oracle") {
    Image white(1, 1, 3);
    white.at(0, 0, 0) = white.at(0, 0, 1) = white.at(0, 0, 2) = 1.0;
    CHECK(rgb_to_luma(white).at(0, 0) == doctest::Approx(0.9999).epsilon(1e-12));

    Image red(1, 1, 3);
    red.at(0, 0, 0) = 1.0;
    CHECK(rgb_to_luma(red).at(0, 0) == 0.2989);

    Rng rng(35);
    const Image img = random_image(5, 6, 3, rng);
    const Image luma = rgb_to_luma(img);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x)
            CHECK(luma.at(y, x) ==
                  0.2989 * img.at(y, x, 0) + 0.5870 * img.at(y, x, 1) + 0.1140 * img.at(y, x, 2));

    CHECK_THROWS_AS(rgb_to_luma(Image::zeros(3, 3, 1)), ShapeError);
}

TEST_CASE("normalize_minmax: affine map, constants, spanning identity") {
    Image img(2, 2, 1);
    img.at(0, 0) = 0.2;
    img.at(0, 1) = 0.6;
    img.at(1, 0) = 1.0;
    img.at(1, 1) = 0.2;
    const Image out = normalize_minmax(img);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.at(1, 0) == 1.0);
    CHECK(out.at(1, 1) == 0.0);

    const Image flat = normalize_minmax(Image::constant(3, 3, 1, 0.8));
    for (double v : flat.data) CHECK(v == 0.0);

    Image span(1, 3, 1);
    span.at(0, 0) = 0.0;
    span.at(0, 1) = 0.25;
    span.at(0, 2) = 1.0;
    const Image same = normalize_minmax(span);
    CHECK(max_abs_diff(same, span) == 0.0);
}

TEST_CASE("resize_bilinear: identity, 2x2 average, formula oracle") {
    Rng rng(36);
    const Image img = random_image(5, 7, 1, rng);
    CHECK(max_abs_diff(resize_bilinear(img, 5, 7), img) < 1e-12);

    Image col(2, 2, 1);
    col.at(0, 1) = 1.0;
    col.at(1, 1) = 1.0;
    const Image one = resize_bilinear(col, 1, 1);
    CHECK(one.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    Image grad(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) grad.at(y, x) = (x + y) / 6.0;
    const Image small = resize_bilinear(grad, 2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double sy = (i + 0.5) * 2.0 - 0.5;
            const double sx = (j + 0.5) * 2.0 - 0.5;
            const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const double top = grad.at(y0, x0) * (1 - fx) + grad.at(y0, x0 + 1) * fx;
            const double bot = grad.at(y0 + 1, x0) * (1 - fx) + grad.at(y0 + 1, x0 + 1) * fx;
            CHECK(small.at(i, j) == doctest::Approx(top * (1 - fy) + bot * fy).epsilon(1e-6));
        }

    CHECK_THROWS_AS(resize_bilinear(img, 0, 3), ParamError);
}

TEST_CASE("ssim: self-similarity, constant pair closed form, symmetry") {
    Rng rng(37);
    const SsimParams p;
    const Image a = random_image(16, 16, 1, rng);
    CHECK(ssim(a, a, p) == doctest::Approx(1.0).epsilon(1e-12));

    const Image ca = Image::constant(16, 16, 1, 0.2);
    const Image cb = Image::constant(16, 16, 1, 0.4);
    const double expected = (2.0 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4);
    CHECK(ssim(ca, cb, p) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.8001).epsilon(1e-3));

    const Image b = random_image(16, 16, 1, rng);
    CHECK(ssim(a, b, p) == doctest::Approx(ssim(b, a, p)).epsilon(1e-12));
    CHECK(std::fabs(ssim(a, b, p)) <= 1.0);

    CHECK_THROWS_AS(ssim(a, Image::zeros(16, 15, 1), p), ShapeError);
    CHECK_THROWS_AS(ssim(Image::zeros(8, 8, 1), Image::zeros(8, 8, 1), p), ShapeError);
}

TEST_CASE("select_frames: identical, alternating, singleton, empty") {
    const SsimParams p;
    const Image black = Image::zeros(16, 16, 1);
    const Image white = Image::constant(16, 16, 1, 1.0);

    const std::vector<Image> same(4, black);
    CHECK(select_frames(same, p, 0.9) == std::vector<size_t>{0});

    const std::vector<Image> alt{black, white, black, white};
    CHECK(select_frames(alt, p, 0.9) == std::vector<size_t>{0, 1, 2, 3});

    CHECK(select_frames({black}, p, 0.9) == std::vector<size_t>{0});
    CHECK(select_frames({}, p, 0.9).empty());
    CHECK_THROWS_AS(select_frames(alt, p, 1.5), ParamError);
}

TEST_CASE("preprocess: constant gray input gives constant low and zero high") {
    const Image gray = Image::constant(48, 40, 3, 0.5);
    PreprocessParams params;
    params.guided.radius = 3;
    params.out_size = 16;
    const PreprocessResult r = preprocess(gray, params);
    CHECK(r.low.height == 16);
    CHECK(r.low.width == 16);
    CHECK(r.low.channels == 3);
    CHECK(r.high.height == 16);
    CHECK(r.high.width == 16);
    CHECK(r.high.channels == 1);
    for (double v : r.low.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-9));
    for (double v : r.high.data) CHECK(v == 0.0);
    for (double v : r.detail_luma.data) CHECK(v == 0.0);
}

TEST_CASE("preprocess: paper preset output shapes are 224x224") {
    Rng rng(38);
    const Image img = random_image(64, 48, 3, rng);
    PreprocessParams params;
    params.guided.radius = 10;
    params.out_size = 224;
    const PreprocessResult r = preprocess(img, params);
    CHECK(r.low.height == 224);
    CHECK(r.low.width == 224);
    CHECK(r.low.channels == 3);
    CHECK(r.high.height == 224);
    CHECK(r.high.width == 224);
    CHECK(r.high.channels == 1);
    CHECK(r.detail_luma.height == 64);
    CHECK(r.detail_luma.width == 48);
}

TEST_CASE("preprocess: equals the five constituent operations applied in order") {
    Rng rng(39);
    const Image img = random_image(64, 48, 3, rng);
    PreprocessParams params;
    params.guided.radius = 4;
    params.out_size = 32;
    const PreprocessResult r = preprocess(img, params);

    const Image low_full = guided_filter_self(img, params.guided);
    const Image detail = detail_layer(img, low_full, params.epsilon);
    const Image dluma = rgb_to_luma(detail);
    const Image dnorm = normalize_minmax(dluma);
    const Image low = resize_bilinear(low_full, 32, 32);
    const Image high = resize_bilinear(dnorm, 32, 32);

    CHECK(max_abs_diff(r.low, low) == 0.0);
    CHECK(max_abs_diff(r.high, high) == 0.0);
    CHECK(max_abs_diff(r.detail_luma, dnorm) == 0.0);

    const PreprocessResult again = preprocess(img, params);
    CHECK(max_abs_diff(r.low, again.low) == 0.0);
    CHECK(max_abs_diff(r.high, again.high) == 0.0);
}
