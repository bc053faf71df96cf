#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <microchar/dense.hpp>

using namespace microchar;

TEST_SUITE("snap_filter") {
    TEST_CASE("nearest-member examples") {
        const std::vector<double> genome{0.1, 2.9, 5.2, 7.7, 9.4};
        const std::vector<int> expected{1, 3, 5, 7, 9};
        for (std::size_t i = 0; i < genome.size(); ++i) {
            CHECK(snap_filter(genome[i]) == expected[i]);
        }
    }

    TEST_CASE("clamps before snapping") {
        CHECK(snap_filter(-4.0) == 1);
        CHECK(snap_filter(25.0) == 9);
    }

    TEST_CASE("exact midpoints snap downward") {
        CHECK(snap_filter(2.0) == 1);
        CHECK(snap_filter(4.0) == 3);
        CHECK(snap_filter(6.0) == 5);
        CHECK(snap_filter(8.0) == 7);
    }

    TEST_CASE("idempotent on already-valid values") {
        for (int k : {1, 3, 5, 7, 9}) {
            CHECK(snap_filter(static_cast<double>(k)) == k);
        }
    }
}

TEST_SUITE("decode_arch") {
    TEST_CASE("genome fills encoder then decoder filters") {
        const ArchSpec base = ArchSpec::default_rgb();
        std::vector<double> genome(11, 3.0);
        genome[0] = 9.2;  // first encoder conv
        genome[8] = 0.5;  // first decoder conv
        const ArchSpec spec = decode_arch(genome, base);
        CHECK(spec.enc_filters[0] == 9);
        CHECK(spec.dec_filters[0] == 1);
        CHECK(spec.out_channels == 3);
        spec.validate();
    }

    TEST_CASE("wrong genome length throws") {
        CHECK_THROWS_AS(decode_arch(std::vector<double>(7, 3.0), ArchSpec::default_rgb()),
                        InvalidArgument);
    }
}

TEST_SUITE("dense_search") {
    TEST_CASE("stubbed fitness favoring all-3x3 finds all-3x3") {
        DenseConfig cfg;
        cfg.generations = 30;
        cfg.lambda = 10;
        cfg.seed = 9;
        cfg.base.levels = 1; // 5 searched convs
        cfg.base.channels = {16};
        cfg.base.enc_filters.assign(4, 3);
        cfg.base.dec_filters.assign(1, 3);
        const auto fitness = [](const ArchSpec& spec, int, int) {
            double f = 0.0;
            for (int k : spec.all_filters()) f += std::abs(k - 3);
            return f;
        };
        const DenseResult result = dense_search_with(cfg, fitness);
        CHECK(result.best_fitness == doctest::Approx(0.0));
        for (int k : result.best.all_filters()) CHECK(k == 3);
    }

    TEST_CASE("history bookkeeping: generations x lambda records") {
        DenseConfig cfg;
        cfg.generations = 3;
        cfg.lambda = 6;
        cfg.seed = 10;
        int evaluations = 0;
        const auto fitness = [&](const ArchSpec& spec, int, int) {
            ++evaluations;
            return static_cast<double>(spec.enc_filters[0]);
        };
        const DenseResult result = dense_search_with(cfg, fitness);
        CHECK(result.history.size() == 18);
        // The cache may skip re-evaluating duplicate decoded specs.
        CHECK(evaluations <= 18);
        std::set<std::pair<int, int>> seen;
        for (const auto& rec : result.history) {
            seen.insert({rec.gen, rec.idx});
            CHECK(rec.genome.size() == 11);
        }
        CHECK(seen.size() == 18);
    }

    TEST_CASE("identical seeds reproduce identical history") {
        DenseConfig cfg;
        cfg.generations = 4;
        cfg.lambda = 6;
        cfg.seed = 11;
        const auto fitness = [](const ArchSpec& spec, int, int) {
            double f = 0.0;
            for (int k : spec.all_filters()) f += k * 0.01;
            return f;
        };
        const DenseResult a = dense_search_with(cfg, fitness);
        const DenseResult b = dense_search_with(cfg, fitness);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].genome == b.history[i].genome);
            CHECK(a.history[i].fitness == b.history[i].fitness);
        }
    }

    TEST_CASE("non-finite fitness scores 1.0") {
        DenseConfig cfg;
        cfg.generations = 1;
        cfg.lambda = 4;
        const auto fitness = [](const ArchSpec&, int, int) {
            return std::numeric_limits<double>::quiet_NaN();
        };
        const DenseResult result = dense_search_with(cfg, fitness);
        for (const auto& rec : result.history) CHECK(rec.fitness == 1.0);
    }

    TEST_CASE("history serializes as one JSON object per line") {
        DenseConfig cfg;
        cfg.generations = 2;
        cfg.lambda = 4;
        const DenseResult result =
            dense_search_with(cfg, [](const ArchSpec&, int, int) { return 0.5; });
        const std::string jsonl = dense_history_jsonl(result);
        std::istringstream in(jsonl);
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            CHECK(line.find("\"gen\"") != std::string::npos);
            CHECK(line.find("\"fitness\"") != std::string::npos);
            CHECK(line.find("\"filters\"") != std::string::npos);
            ++lines;
        }
        CHECK(lines == 8);
    }

    TEST_CASE("random_archspec draws only allowed filters") {
        Rng rng(12);
        for (int rep = 0; rep < 20; ++rep) {
            const ArchSpec spec = random_archspec(rng, ArchSpec::default_rgb());
            for (int k : spec.all_filters()) {
                CHECK((k == 1 || k == 3 || k == 5 || k == 7 || k == 9));
            }
        }
    }
}
