#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "handbio/error.hpp"
#include "handbio/rng.hpp"
#include "handbio/serialize.hpp"
#include "handbio/svm.hpp"
#include "oracles.hpp"

using namespace handbio;
using namespace handbio::svm;

namespace {

DataMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    DataMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), m.row(static_cast<int>(i)));
    return m;
}

// Decision function rebuilt from an oracle QP solution: bias averaged over
// free support vectors, mirroring the on-margin KKT condition.
struct OracleSvm {
    const DataMatrix& x;
    const std::vector<int>& y;
    Kernel kernel;
    std::vector<double> alpha;
    double bias = 0.0;
    int free_svs = 0;

    OracleSvm(const DataMatrix& x_, const std::vector<int>& y_, const Kernel& k, double c)
        : x(x_), y(y_), kernel(k) {
        const int n = x.rows;
        std::vector<std::vector<double>> q(n, std::vector<double>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                q[i][j] = y[i] * y[j] * kernel_eval(kernel, x.row(i), x.row(j), x.cols);
        alpha = testsupport::qp_box_solve(q, c);
        double bsum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (alpha[i] > 1e-7 && alpha[i] < c * (1.0 - 1e-7)) {
                bsum += y[i] - raw(x.row(i));
                ++free_svs;
            }
        }
        if (free_svs > 0) bias = bsum / free_svs;
    }

    double raw(const double* z) const {
        double acc = 0.0;
        for (int i = 0; i < x.rows; ++i)
            acc += alpha[i] * y[i] * kernel_eval(kernel, x.row(i), z, x.cols);
        return acc;
    }
    double decide(const double* z) const { return raw(z) + bias; }
};

// Clustered subjects in feature space: one Gaussian blob per subject id.
void subject_blobs(int subjects, int per_subject, int dim, uint64_t seed, DataMatrix& x,
                   std::vector<int>& labels) {
    Rng rng(seed);
    DataMatrix centers(subjects, dim);
    for (double& v : centers.data) v = rng.uniform(-2.0, 2.0);
    x = DataMatrix(subjects * per_subject, dim);
    labels.assign(static_cast<size_t>(subjects) * per_subject, 0);
    for (int s = 0; s < subjects; ++s) {
        for (int k = 0; k < per_subject; ++k) {
            const int r = s * per_subject + k;
            labels[r] = 100 + s;
            for (int j = 0; j < dim; ++j) x.row(r)[j] = centers.row(s)[j] + rng.normal(0.0, 0.15);
        }
    }
}

int argmax_idx(const std::vector<double>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace

TEST_CASE("kernel evaluation") {
    const std::vector<double> a{1.0, 2.0}, b{3.0, 4.0};
    CHECK(kernel_eval(Kernel::linear(), a.data(), b.data(), 2) == 11.0);
    CHECK(kernel_eval(Kernel::poly2(), a.data(), b.data(), 2) == 144.0);  // (11 + 1)^2

    Kernel k{Kernel::Kind::Polynomial, 1, 2.0, 0.5};
    CHECK(kernel_eval(k, a.data(), b.data(), 2) == 22.5);

    SUBCASE("symmetry is exact") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> u(7), v(7);
            for (double& e : u) e = rng.uniform(-3.0, 3.0);
            for (double& e : v) e = rng.uniform(-3.0, 3.0);
            CHECK(kernel_eval(Kernel::linear(), u.data(), v.data(), 7) ==
                  kernel_eval(Kernel::linear(), v.data(), u.data(), 7));
            CHECK(kernel_eval(Kernel::poly2(), u.data(), v.data(), 7) ==
                  kernel_eval(Kernel::poly2(), v.data(), u.data(), 7));
        }
    }
    SUBCASE("validation") {
        Kernel bad = Kernel::poly2();
        bad.degree = 0;
        CHECK_THROWS_AS(bad.validate(), ParamError);
        bad = Kernel::linear();
        bad.scale = std::nan("");
        CHECK_THROWS_AS(bad.validate(), ParamError);
    }
}

TEST_CASE("feature scaler") {
    const DataMatrix x = matrix_from({{1.0, 10.0}, {3.0, 10.0}, {5.0, 10.0}});
    const Scaler s = Scaler::fit(x);
    CHECK(s.mean[0] == doctest::Approx(3.0));
    CHECK(s.mean[1] == doctest::Approx(10.0));
    CHECK(s.scale[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(s.scale[1] == 1.0);  // constant column keeps unit scale

    const DataMatrix t = s.transform(x);
    double mean0 = 0.0, var0 = 0.0;
    for (int i = 0; i < 3; ++i) mean0 += t.row(i)[0];
    mean0 /= 3.0;
    for (int i = 0; i < 3; ++i) var0 += (t.row(i)[0] - mean0) * (t.row(i)[0] - mean0);
    CHECK(mean0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var0 / 3.0 == doctest::Approx(1.0));
    for (int i = 0; i < 3; ++i) CHECK(t.row(i)[1] == 0.0);

    CHECK_THROWS_AS(s.transform(std::vector<double>{1.0}.data(), 1), ShapeError);
    CHECK_THROWS_AS(Scaler::fit(DataMatrix{}), DataError);
}

TEST_CASE("two-point max-margin problem solves to f(x)=x") {
    const DataMatrix x = matrix_from({{-1.0}, {1.0}});
    const std::vector<int> y{-1, 1};
    const SvmModel m = train_binary(x, y, Kernel::linear(), 1e6, 1e-9);

    CHECK(decision_value(m, {0.5}) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(decision_value(m, {-1.0}) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(decision_value(m, {1.0}) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(decision_value(m, {0.0}) == doctest::Approx(0.0).epsilon(1e-6));

    SUBCASE("free support vectors sit on the margin") {
        for (int k = 0; k < m.support_vectors.rows; ++k) {
            const double a = std::abs(m.coeffs[k]);
            if (a > 1e-7 && a < m.c_box * (1.0 - 1e-7)) {
                CHECK(std::abs(decision_value(m, m.support_vectors.row(k), 1)) ==
                      doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
    SUBCASE("linear kernel gives a linear decision function") {
        const double f0 = decision_value(m, {0.0});
        const double f1 = decision_value(m, {0.3});
        const double f2 = decision_value(m, {-0.8});
        const double f12 = decision_value(m, {0.3 - 0.8});
        CHECK(f12 - f0 == doctest::Approx((f1 - f0) + (f2 - f0)).epsilon(1e-12));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(decision_value(m, {0.5, 0.5}), ShapeError);
    }
}

TEST_CASE("xor needs the degree-2 kernel") {
    const DataMatrix x = matrix_from({{0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}});
    const std::vector<int> y{-1, -1, 1, 1};
    const SvmModel m = train_binary(x, y, Kernel::poly2(), 10.0, 1e-8);
    for (int i = 0; i < 4; ++i) {
        const double f = decision_value(m, x.row(i), 2);
        CHECK(f * y[i] > 0.0);
    }
}

TEST_CASE("duplicating every training point leaves the decision unchanged") {
    // Separable data with a clear margin and a non-binding box: the optimum
    // is the unique max-margin function, so duplicates change nothing. (With
    // a binding box, duplication doubles the effective constraint instead.)
    Rng rng(9);
    DataMatrix x(10, 2);
    std::vector<int> y(10);
    for (int i = 0; i < 10; ++i) {
        double s = 0.0;
        do {
            x.row(i)[0] = rng.uniform(-1.0, 1.0);
            x.row(i)[1] = rng.uniform(-1.0, 1.0);
            s = x.row(i)[0] + 0.5 * x.row(i)[1];
        } while (std::abs(s) < 0.3);
        y[i] = s > 0.0 ? 1 : -1;
    }
    DataMatrix x2(20, 2);
    std::vector<int> y2(20);
    for (int i = 0; i < 20; ++i) {
        std::copy(x.row(i % 10), x.row(i % 10) + 2, x2.row(i));
        y2[i] = y[i % 10];
    }
    for (const Kernel& k : {Kernel::linear(), Kernel::poly2()}) {
        const SvmModel a = train_binary(x, y, k, 1e5, 1e-8, 200000);
        const SvmModel b = train_binary(x2, y2, k, 1e5, 1e-8, 200000);
        for (int t = 0; t < 20; ++t) {
            const std::vector<double> probe{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            CHECK(decision_value(a, probe) == doctest::Approx(decision_value(b, probe)).epsilon(1e-4));
        }
    }
}

TEST_CASE("isda matches a dense box-qp oracle on small instances") {
    Rng rng(31);
    int instances = 0, free_sv_instances = 0;
    for (int n : {6, 12, 20, 30}) {
        for (int d : {2, 4}) {
            for (const Kernel& k : {Kernel::linear(), Kernel::poly2()}) {
                for (double c : {0.5, 2.0}) {
                    DataMatrix x(n, d);
                    std::vector<int> y(n);
                    bool pos = false, neg = false;
                    for (int i = 0; i < n; ++i) {
                        for (int j = 0; j < d; ++j) x.row(i)[j] = rng.uniform(-1.0, 1.0);
                        const double side = x.row(i)[0] + 0.5 * x.row(i)[1] + rng.normal(0.0, 0.4);
                        y[i] = side > 0.0 ? 1 : -1;
                        (y[i] == 1 ? pos : neg) = true;
                    }
                    if (!pos) y[0] = 1;
                    if (!neg) y[1] = -1;

                    const SvmModel m = train_binary(x, y, k, c, 1e-6, 200000);
                    const OracleSvm oracle(x, y, k, c);
                    ++instances;
                    if (oracle.free_svs > 0) ++free_sv_instances;

                    for (int i = 0; i < n; ++i)
                        CHECK(decision_value(m, x.row(i), d) ==
                              doctest::Approx(oracle.decide(x.row(i))).epsilon(1e-3));
                    for (int t = 0; t < 5; ++t) {
                        std::vector<double> probe(d);
                        for (double& v : probe) v = rng.uniform(-1.0, 1.0);
                        CHECK(decision_value(m, probe) ==
                              doctest::Approx(oracle.decide(probe.data())).epsilon(1e-3));
                    }
                }
            }
        }
    }
    CHECK(instances == 32);
    CHECK(free_sv_instances >= 24);  // bias is pinned by the data almost always
}

TEST_CASE("training input validation") {
    const DataMatrix x = matrix_from({{0.0}, {1.0}});
    CHECK_THROWS_AS(train_binary(x, {1, 1}, Kernel::linear(), 1.0), DataError);
    CHECK_THROWS_AS(train_binary(x, {0, 1}, Kernel::linear(), 1.0), ParamError);
    CHECK_THROWS_AS(train_binary(x, {1}, Kernel::linear(), 1.0), ShapeError);
    CHECK_THROWS_AS(train_binary(x, {-1, 1}, Kernel::linear(), -1.0), ParamError);
    CHECK_THROWS_AS(train_binary(x, {-1, 1}, Kernel::linear(), 1.0, -1.0), ParamError);
    DataMatrix bad = x;
    bad.row(0)[0] = std::nan("");
    CHECK_THROWS_AS(train_binary(bad, {-1, 1}, Kernel::linear(), 1.0), DataError);
    CHECK_THROWS_AS(train_binary(matrix_from({{0.0}}), {1}, Kernel::linear(), 1.0), DataError);
}

TEST_CASE("platt calibration") {
    SUBCASE("separated values steepen the sigmoid") {
        std::vector<double> f;
        std::vector<int> y;
        for (int i = 0; i < 200; ++i) {
            f.push_back(0.5 + 0.05 * i);
            y.push_back(1);
            f.push_back(-0.5 - 0.05 * i);
            y.push_back(-1);
        }
        const auto [a, b] = platt_fit_values(f, y);
        CHECK(a < 0.0);
        const double p_hi = 1.0 / (1.0 + std::exp(a * 10.45 + b));
        const double p_lo = 1.0 / (1.0 + std::exp(a * -10.45 + b));
        CHECK(p_hi >= 0.99);
        CHECK(p_lo <= 0.01);
    }
    SUBCASE("symmetric values balance the intercept") {
        const std::vector<double> f{-2.0, -1.0, 1.0, 2.0};
        const std::vector<int> y{-1, -1, 1, 1};
        const auto [a, b] = platt_fit_values(f, y);
        CHECK(a < 0.0);
        CHECK(b == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(1.0 / (1.0 + std::exp(b)) == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("single-class holdout") {
        CHECK_THROWS_AS(platt_fit_values({1.0, 2.0}, {1, 1}), DataError);
        CHECK_THROWS_AS(platt_fit_values({1.0, 2.0}, {1}), ShapeError);
        CHECK_THROWS_AS(platt_fit_values({1.0, 2.0}, {1, 0}), ParamError);
    }
}

TEST_CASE("log posterior") {
    // f(x) = x with a unit sigmoid: posterior(x) = 1/(1+exp(-x)).
    SvmModel m;
    m.kernel = Kernel::linear();
    m.support_vectors = matrix_from({{1.0}});
    m.coeffs = {1.0};
    m.bias = 0.0;

    CHECK_THROWS_AS(log_posterior(m, {0.0}), StateError);
    m.platt_a = -1.0;
    m.platt_b = 0.0;
    m.platt_fitted = true;

    SUBCASE("hand values") {
        CHECK(log_posterior(m, {std::log(9.0)}) == doctest::Approx(std::log(0.9)).epsilon(1e-12));
        CHECK(log_posterior(m, {std::log(9.0)}) == doctest::Approx(-0.10536).epsilon(1e-4));
        const double saturated = log_posterior(m, {800.0});
        CHECK(saturated <= 0.0);
        CHECK(saturated >= -1e-12);
    }
    SUBCASE("always nonpositive and monotone in the decision value") {
        double prev = -1e300;
        for (int i = -60; i <= 60; ++i) {
            const double lp = log_posterior(m, {0.5 * i});
            CHECK(lp <= 0.0);
            CHECK(lp >= prev);
            prev = lp;
        }
    }
}

TEST_CASE("one-vs-all bank") {
    SUBCASE("two subjects mirror the binary problem") {
        DataMatrix x;
        std::vector<int> labels;
        subject_blobs(2, 8, 3, 17, x, labels);
        OvaOptions opt;
        const SvmBank bank = train_one_vs_all(x, labels, opt);
        CHECK(bank.classes == std::vector<int>{100, 101});
        CHECK(bank.models.size() == 2);

        std::vector<int> y01(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) y01[i] = labels[i] == 101 ? 1 : 0;
        const CalibratedSvm binary =
            train_calibrated_binary(x, y01, opt.kernel, opt.c_box, opt.tol, opt.max_passes,
                                    opt.calib_folds);
        for (int i = 0; i < x.rows; ++i) {
            std::vector<double> probe(x.row(i), x.row(i) + x.cols);
            const auto scores = bank_log_posteriors(bank, probe);
            CHECK((argmax_idx(scores) == 1) == (predict_calibrated(binary, probe) == 1));
        }
    }
    SUBCASE("ten clustered subjects identify held-out points") {
        DataMatrix x;
        std::vector<int> labels;
        subject_blobs(10, 10, 8, 23, x, labels);
        // First 6 images per subject train the bank, the last 4 test it.
        DataMatrix xtr(60, 8), xte(40, 8);
        std::vector<int> ytr(60), yte(40);
        int tr = 0, te = 0;
        for (int i = 0; i < x.rows; ++i) {
            if (i % 10 < 6) {
                std::copy(x.row(i), x.row(i) + 8, xtr.row(tr));
                ytr[tr++] = labels[i];
            } else {
                std::copy(x.row(i), x.row(i) + 8, xte.row(te));
                yte[te++] = labels[i];
            }
        }
        const SvmBank bank = train_one_vs_all(xtr, ytr, OvaOptions{});
        CHECK(bank.classes.size() == 10);
        CHECK(bank.models.size() == bank.classes.size());
        int correct = 0;
        for (int i = 0; i < 40; ++i) {
            std::vector<double> probe(xte.row(i), xte.row(i) + 8);
            const auto scores = bank_log_posteriors(bank, probe);
            CHECK(scores.size() == 10);
            for (double s : scores) CHECK(s <= 0.0);
            if (bank.classes[argmax_idx(scores)] == yte[i]) ++correct;
        }
        CHECK(static_cast<double>(correct) / 40.0 >= 0.9);

        // Retraining is deterministic.
        const SvmBank again = train_one_vs_all(xtr, ytr, OvaOptions{});
        std::vector<double> probe(xte.row(0), xte.row(0) + 8);
        const auto s1 = bank_log_posteriors(bank, probe);
        const auto s2 = bank_log_posteriors(again, probe);
        for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
    }
    SUBCASE("classes come out ascending regardless of label order") {
        const DataMatrix x = matrix_from(
            {{5.0, 0.1}, {5.1, 0.0}, {-5.0, 0.2}, {-5.2, 0.1}, {0.0, 5.0}, {0.1, 5.1}});
        const std::vector<int> labels{300, 300, 100, 100, 200, 200};
        const SvmBank bank = train_one_vs_all(x, labels, OvaOptions{});
        CHECK(bank.classes == std::vector<int>{100, 200, 300});
    }
    SUBCASE("a subject with one example is rejected by name") {
        const DataMatrix x = matrix_from({{0.0}, {1.0}, {2.0}});
        try {
            train_one_vs_all(x, {7, 7, 42}, OvaOptions{});
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("42") != std::string::npos);
        }
        CHECK_THROWS_AS(train_one_vs_all(x, {7, 7, 7}, OvaOptions{}), DataError);
        CHECK_THROWS_AS(train_one_vs_all(x, {7, 7}, OvaOptions{}), ShapeError);
    }
}

TEST_CASE("sum rule fusion") {
    SUBCASE("single view passes through") {
        const std::vector<double> view{-0.2, -1.5, -0.7};
        const FusedScores f = sum_rule_fuse({view});
        CHECK(f.scores == view);
        CHECK(f.argmax == 0);
    }
    SUBCASE("hand-combined posteriors") {
        const std::vector<double> v1{std::log(0.7), std::log(0.3)};
        const std::vector<double> v2{std::log(0.4), std::log(0.6)};
        const FusedScores f = sum_rule_fuse({v1, v2});
        CHECK(f.scores[0] == doctest::Approx(std::log(0.28)).epsilon(1e-12));
        CHECK(f.scores[1] == doctest::Approx(std::log(0.18)).epsilon(1e-12));
        CHECK(f.argmax == 0);
    }
    SUBCASE("per-view constant shifts keep the argmax") {
        const std::vector<double> v1{-0.2, -1.5, -0.7};
        const std::vector<double> v2{-0.9, -0.4, -1.1};
        const int base = sum_rule_fuse({v1, v2}).argmax;
        std::vector<double> shifted = v1;
        for (double& s : shifted) s += -2.5;
        CHECK(sum_rule_fuse({shifted, v2}).argmax == base);
    }
    SUBCASE("ties resolve to the lowest class index") {
        CHECK(sum_rule_fuse({{-1.0, -1.0, -5.0}}).argmax == 0);
    }
    SUBCASE("view disagreement") {
        CHECK_THROWS_AS(sum_rule_fuse({{-1.0, -2.0}, {-1.0}}), ConfigError);
        CHECK_THROWS_AS(sum_rule_fuse({}), ConfigError);
        CHECK_THROWS_AS(sum_rule_fuse({{}}), ConfigError);
    }
}

TEST_CASE("threshold acceptance") {
    const AcceptDecision a = threshold_accept({std::log(0.95), std::log(0.5)}, std::log(0.9));
    CHECK(a.accepted);
    CHECK(a.cls == 0);

    const AcceptDecision r = threshold_accept({-3.0, -2.0}, -1.0);
    CHECK_FALSE(r.accepted);
    CHECK(r.cls == 1);

    // t = log(1) = 0 rejects everything: log-posteriors never exceed 0.
    const AcceptDecision z = threshold_accept({0.0, -1.0}, 0.0);
    CHECK_FALSE(z.accepted);
    CHECK(z.cls == 0);

    CHECK_THROWS_AS(threshold_accept({}, 0.0), ConfigError);
}

TEST_CASE("bank serialization round trip") {
    DataMatrix x;
    std::vector<int> labels;
    subject_blobs(3, 6, 4, 29, x, labels);
    const SvmBank bank = train_one_vs_all(x, labels, OvaOptions{});

    const auto path = (std::filesystem::temp_directory_path() / "handbio_bank_rt.hbs").string();
    io::save_bank(path, bank);
    const SvmBank back = io::load_bank(path);
    std::remove(path.c_str());

    CHECK(back.classes == bank.classes);
    CHECK(back.kernel.kind == bank.kernel.kind);
    CHECK(back.kernel.degree == bank.kernel.degree);
    CHECK(back.c_box == bank.c_box);
    Rng rng(41);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> probe(4);
        for (double& v : probe) v = rng.uniform(-2.0, 2.0);
        const auto s1 = bank_log_posteriors(bank, probe);
        const auto s2 = bank_log_posteriors(back, probe);
        REQUIRE(s1.size() == s2.size());
        for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
    }
}
