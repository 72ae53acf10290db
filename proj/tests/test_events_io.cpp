#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sdgn/events_io.hpp"

using namespace sdgn;

namespace {

EventSequence parse(const std::string& text) {
    std::istringstream in(text);
    return parse_event_file(in);
}

EventSequence seq_of(std::vector<Event> ev, std::size_t types, double horizon) {
    return EventSequence(std::move(ev), types, horizon);
}

}

TEST(EventFile, ParsesHeaderAndEvents) {
    const auto s = parse("{\"num_types\": 2, \"horizon\": 10}\n{\"t\": 1.0, \"e\": 0}\n{\"t\": 2.5, \"e\": 1}\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.num_types(), 2u);
    EXPECT_DOUBLE_EQ(s.horizon(), 10.0);
    EXPECT_DOUBLE_EQ(s[1].t, 2.5);
    EXPECT_EQ(s[1].type, 1u);
}

TEST(EventFile, EmptyBodyIsValid) {
    EXPECT_EQ(parse("{\"num_types\": 3, \"horizon\": 1}\n").size(), 0u);
}

TEST(EventFile, RejectsTimeBeyondHorizon) {
    EXPECT_THROW(parse("{\"num_types\": 2, \"horizon\": 10}\n{\"t\": 11.0, \"e\": 0}\n"), validation_error);
}

TEST(EventFile, RejectsTypeOutOfRange) {
    EXPECT_THROW(parse("{\"num_types\": 2, \"horizon\": 10}\n{\"t\": 1.0, \"e\": 2}\n"), validation_error);
}

TEST(EventFile, MalformedLineReportsLineNumber) {
    try {
        parse("{\"num_types\": 2, \"horizon\": 10}\n{\"t\": 1.0, \"e\": 0}\n{\"t\": oops}\n");
        FAIL() << "expected parse_error";
    }
    catch (const parse_error& e) {
        EXPECT_EQ(e.line, 3u);
    }
}

TEST(EventFile, MissingHeaderIsAParseError) {
    EXPECT_THROW(parse("{\"t\": 1.0, \"e\": 0}\n"), parse_error);
}

TEST(EventFile, SortsStablyByTime) {
    const auto s = parse("{\"num_types\": 3, \"horizon\": 10}\n{\"t\": 2, \"e\": 2}\n{\"t\": 1, \"e\": 0}\n{\"t\": 2, \"e\": 1}\n");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].type, 0u);
    EXPECT_EQ(s[1].type, 2u);
    EXPECT_EQ(s[2].type, 1u);
}

TEST(EventFile, RoundTripIsBitExact) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 100);
    std::vector<Event> ev;
    for (int k = 0; k < 500; ++k) ev.push_back({u(rng), static_cast<event_type>(k % 5)});
    const auto s = seq_of(ev, 5, 100);
    std::ostringstream out;
    write_event_file(out, s);
    std::istringstream in(out.str());
    const auto back = parse_event_file(in);
    ASSERT_EQ(back.size(), s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_EQ(back[k].t, s[k].t);
        EXPECT_EQ(back[k].type, s[k].type);
    }
}

TEST(Split, HalfwayExample) {
    const auto s = seq_of({{1, 0}, {2, 0}, {3, 0}, {4, 0}}, 1, 5);
    const auto [train, test] = split_train_test(s, 0.5);
    ASSERT_EQ(train.size(), 2u);
    EXPECT_DOUBLE_EQ(train.horizon(), 2.5);
    ASSERT_EQ(test.size(), 2u);
    EXPECT_DOUBLE_EQ(test[0].t, 0.5);
    EXPECT_DOUBLE_EQ(test[1].t, 1.5);
    EXPECT_DOUBLE_EQ(test.horizon(), 2.5);
}

TEST(Split, FractionNearOneKeepsEverythingInTrain) {
    const auto s = seq_of({{1, 0}, {2, 0}, {3, 0}}, 1, 5);
    const auto [train, test] = split_train_test(s, 0.999999);
    EXPECT_EQ(train.size(), 3u);
    EXPECT_EQ(test.size(), 0u);
}

TEST(Split, IsAPartitionAndMatchesEnumeration) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 50);
    std::vector<Event> ev;
    for (int k = 0; k < 1000; ++k) ev.push_back({u(rng), static_cast<event_type>(k % 3)});
    const auto s = seq_of(ev, 3, 50);
    std::size_t below = 0;
    for (const auto& e: s.events()) below += e.t < 40.0;
    const auto [train, test] = split_train_test(s, 0.8);
    EXPECT_EQ(train.size(), below);
    EXPECT_EQ(train.size() + test.size(), s.size());
    for (std::size_t k = 0; k < test.size(); ++k) EXPECT_DOUBLE_EQ(test[k].t + 40.0, s[below + k].t);
}

TEST(Split, RejectsFractionOutsideUnitInterval) {
    const auto s = seq_of({}, 1, 1);
    EXPECT_THROW(split_train_test(s, 0.0), validation_error);
    EXPECT_THROW(split_train_test(s, 1.0), validation_error);
}

TEST(Encode, MapsTypesToTrains) {
    const auto trains = encode_as_spikes(seq_of({{1, 0}, {2, 1}, {3, 0}}, 2, 5));
    ASSERT_EQ(trains.size(), 2u);
    EXPECT_EQ(trains[0].times, (std::vector<double>{1.0, 3.0}));
    EXPECT_EQ(trains[1].times, (std::vector<double>{2.0}));
}

TEST(Encode, EmptySequenceGivesEmptyTrains) {
    const auto trains = encode_as_spikes(seq_of({}, 4, 5));
    ASSERT_EQ(trains.size(), 4u);
    for (const auto& t: trains) EXPECT_TRUE(t.times.empty());
}

TEST(Encode, SameTypeTieIsJittered) {
    const auto trains = encode_as_spikes(seq_of({{1, 0}, {1, 0}}, 1, 5));
    ASSERT_EQ(trains[0].times.size(), 2u);
    EXPECT_EQ(trains[0].times[0], 1.0);
    EXPECT_EQ(trains[0].times[1], 1.0 + tie_epsilon);
    EXPECT_TRUE(trains[0].valid());
}

TEST(Encode, PreservesTotalCount) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<Event> ev;
    for (int k = 0; k < 300; ++k) ev.push_back({std::round(u(rng)*10)/10, static_cast<event_type>(k % 4)});
    const auto s = seq_of(ev, 4, 10);
    std::size_t total = 0;
    for (const auto& t: encode_as_spikes(s)) {
        EXPECT_TRUE(t.valid());
        total += t.times.size();
    }
    EXPECT_EQ(total, s.size());
}
