#include <random>

#include "support.hpp"

#include "droneguard/ensemble.hpp"

using namespace droneguard;
using namespace droneguard::ensemble;
using detectors::Vote;

namespace {

constexpr Vote A = Vote::Anomaly;
constexpr Vote N = Vote::Normal;

rules::Violation violation(const std::string& text) {
    rules::Violation v;
    v.description = text;
    v.rule = text;
    return v;
}

PointVerdict verdict(bool anomalous, std::int64_t ts = 0) {
    const std::array<Vote, 5> votes{anomalous ? A : N, anomalous ? A : N, anomalous ? A : N, N, N};
    return decide({}, vote(votes), 0, ts);
}

}  // namespace

TEST_CASE("majority vote") {
    CHECK(vote(std::array{A, A, A, N, N}).majority == A);
    CHECK(vote(std::array{N, N, N, N, N}).majority == N);
    CHECK(vote(std::array{A, A, N, N, N}).majority == N);
    CHECK(vote(std::array{A, N, A, N, A}).anomaly_votes() == 3);
    CHECK_ERRC(vote(std::vector<Vote>{A, A, A}), Errc::WrongArity);
    CHECK_ERRC(vote(std::vector<Vote>(6, A)), Errc::WrongArity);
}

TEST_CASE("decision matrix cells") {
    const auto yes = vote(std::array{A, A, A, A, N});
    const auto no = vote(std::array{A, N, N, N, N});
    CHECK(decide({violation("r")}, yes).final == A);
    CHECK(decide({}, yes).final == A);
    CHECK(decide({violation("r")}, no).final == A);
    CHECK(decide({}, no).final == N);
}

TEST_CASE("explanations name the rules and the voters") {
    const auto v = decide({violation("roll out of range"), violation("baro lost")}, vote(std::array{A, N, A, A, N}), 4, 800);
    REQUIRE(v.explanation.size() == 3);
    CHECK(v.explanation[0] == "roll out of range");
    CHECK(v.explanation[1] == "baro lost");
    CHECK(v.explanation[2] == "ensemble majority 3/5 flags this point (KM=A DB=N OP=A LOF=A SVM=N)");
    CHECK(format_verdict_line(v) ==
          "ts=800 final=ANOMALY rules=[roll out of range;baro lost] votes=KM:A DB:N OP:A LOF:A SVM:N");
    CHECK(decide({}, vote(std::array{A, N, N, N, N})).explanation.empty());
}

TEST_CASE("random violations and votes follow the OR rule") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        std::array<Vote, 5> votes{};
        int count = 0;
        for (auto& x : votes) {
            x = rng() % 2 ? A : N;
            count += x == A;
        }
        std::vector<rules::Violation> vs(rng() % 3, violation("x"));
        const bool expect = !vs.empty() || count >= 3;
        CHECK((decide(vs, vote(votes)).final == A) == expect);
    }
}

TEST_CASE("dropping one voter never flips a 4-1 or 5-0 majority") {
    for (unsigned mask = 0; mask < 32; ++mask) {
        std::array<Vote, 5> votes{};
        int count = 0;
        for (int i = 0; i < 5; ++i) {
            votes[i] = (mask >> i) & 1U ? A : N;
            count += votes[i] == A;
        }
        if (count != 0 && count != 1 && count != 4 && count != 5) continue;
        const auto full = vote(votes).majority;
        for (int drop = 0; drop < 5; ++drop) {
            int rest = 0;
            for (int i = 0; i < 5; ++i) rest += i != drop && votes[i] == A;
            // four remaining voters: a strict majority needs 3
            const Vote reduced = rest >= 3 ? A : (4 - rest >= 3 ? N : full);
            CHECK(reduced == full);
        }
    }
}

TEST_CASE("window alerts") {
    SUBCASE("four of ten with no run requirement") {
        WindowState s{{10, 0.3, 1}, {}, 0};
        std::optional<Alert> last;
        for (int i = 0; i < 6; ++i) last = stream_step(s, verdict(false, i));
        for (int i = 6; i < 10; ++i) last = stream_step(s, verdict(true, i));
        REQUIRE(last.has_value());
        CHECK(last->window_fraction == doctest::Approx(0.4));
        CHECK(last->timestamp_ms == 9);
        CHECK(format_alert_line(*last).rfind("ALERT window_frac=0.40 run=4 ts=9", 0) == 0);
    }
    SUBCASE("two of ten stays quiet") {
        WindowState s{{10, 0.3, 1}, {}, 0};
        bool any = false;
        for (int i = 0; i < 10; ++i) any = stream_step(s, verdict(i == 3 || i == 7)).has_value() || any;
        CHECK_FALSE(any);
    }
    SUBCASE("isolated anomalies are suppressed by the run length") {
        WindowState s{{10, 0.3, 3}, {}, 0};
        bool any = false;
        for (int i = 0; i < 40; ++i) any = stream_step(s, verdict(i % 2 == 0)).has_value() || any;
        CHECK_FALSE(any);
        CHECK_FALSE(stream_step(s, verdict(true)).has_value());
        CHECK_FALSE(stream_step(s, verdict(true)).has_value());
        CHECK(stream_step(s, verdict(true)).has_value());
    }
    SUBCASE("ring never exceeds the window") {
        WindowState s{{5, 0.3, 1}, {}, 0};
        for (int i = 0; i < 20; ++i) {
            stream_step(s, verdict(true));
            CHECK(s.ring.size() <= 5);
        }
    }
    SUBCASE("deterministic in state and verdict") {
        WindowState a{{10, 0.3, 3}, {}, 0};
        WindowState b = a;
        std::mt19937_64 rng(1);
        for (int i = 0; i < 200; ++i) {
            const auto v = verdict(rng() % 3 == 0, i);
            CHECK(stream_step(a, v).has_value() == stream_step(b, v).has_value());
        }
    }
}
