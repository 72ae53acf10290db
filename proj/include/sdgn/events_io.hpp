#pragma once

// Multivariate event sequences: validation, the line-delimited file format,
// train/test splitting and conversion to input spike trains.
//
// File format (UTF-8, LF-delimited):
//   {"num_types": E, "horizon": T}
//   {"t": <seconds>, "e": <type>}
//   ...

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "jsonl.hpp"

namespace sdgn {

using event_type = std::uint32_t;

struct Event {
    double t = 0;
    event_type type = 0;

    friend bool operator==(const Event&, const Event&) = default;
};

// Same-type simultaneous events are separated by this much when encoded as spikes.
inline constexpr double tie_epsilon = 1e-9;

class EventSequence {
public:
    EventSequence() = default;

    // Sorts `events` by time (stable) and validates against `num_types`/`horizon`.
    EventSequence(std::vector<Event> events, std::size_t num_types, double horizon):
        events_(std::move(events)), num_types_(num_types), horizon_(horizon)
    {
        if (!(horizon_ >= 0) || !std::isfinite(horizon_)) {
            throw validation_error("horizon must be finite and non-negative");
        }
        std::stable_sort(events_.begin(), events_.end(),
            [](const Event& a, const Event& b) { return a.t < b.t; });
        for (std::size_t i = 0; i < events_.size(); ++i) {
            check_event(events_[i], i + 1);
        }
    }

    std::span<const Event> events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    std::size_t num_types() const { return num_types_; }
    double horizon() const { return horizon_; }
    const Event& operator[](std::size_t i) const { return events_[i]; }

    std::size_t count(event_type e) const {
        return std::count_if(events_.begin(), events_.end(),
            [e](const Event& ev) { return ev.type == e; });
    }

    // Events with t < `t` (the history H_t).
    std::span<const Event> history(double t) const {
        auto it = std::lower_bound(events_.begin(), events_.end(), t,
            [](const Event& ev, double x) { return ev.t < x; });
        return {events_.data(), static_cast<std::size_t>(it - events_.begin())};
    }

    friend bool operator==(const EventSequence&, const EventSequence&) = default;

private:
    void check_event(const Event& ev, std::size_t idx) const {
        if (!std::isfinite(ev.t) || ev.t < 0 || ev.t > horizon_) {
            throw validation_error("event " + std::to_string(idx) + ": time "
                + std::to_string(ev.t) + " outside [0, " + std::to_string(horizon_) + "]");
        }
        if (ev.type >= num_types_) {
            throw validation_error("event " + std::to_string(idx) + ": type "
                + std::to_string(ev.type) + " >= num_types " + std::to_string(num_types_));
        }
    }

    std::vector<Event> events_;
    std::size_t num_types_ = 0;
    double horizon_ = 0;
};

struct SpikeTrain {
    std::size_t neuron = 0;
    std::vector<double> times;

    bool valid() const {
        return std::adjacent_find(times.begin(), times.end(),
            [](double a, double b) { return !(a < b); }) == times.end();
    }

    friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;
};

inline EventSequence parse_event_file(std::istream& in) {
    std::optional<std::size_t> num_types;
    std::optional<double> horizon;
    std::vector<Event> events;
    std::vector<std::size_t> linenos;

    for_each_record(in, [&](const json& rec, std::size_t lineno) {
        if (!num_types) {
            if (!rec.contains("num_types") || !rec.contains("horizon")) {
                throw parse_error(lineno, "expected header {\"num_types\": E, \"horizon\": T}");
            }
            const auto& e = rec["num_types"];
            const auto& h = rec["horizon"];
            if (!e.is_number_unsigned() || !h.is_number()) {
                throw parse_error(lineno, "header fields have wrong types");
            }
            num_types = e.get<std::size_t>();
            horizon = h.get<double>();
            return;
        }
        if (!rec.contains("t") || !rec.contains("e") || rec.size() != 2) {
            throw parse_error(lineno, "expected {\"t\": <float>, \"e\": <int>}");
        }
        const auto& t = rec["t"];
        const auto& e = rec["e"];
        if (!t.is_number() || !e.is_number_unsigned()) {
            throw parse_error(lineno, "event fields have wrong types");
        }
        Event ev{t.get<double>(), e.get<event_type>()};
        if (ev.type >= *num_types) {
            throw validation_error("line " + std::to_string(lineno) + ": type "
                + std::to_string(ev.type) + " >= num_types " + std::to_string(*num_types));
        }
        if (!(ev.t >= 0 && ev.t <= *horizon)) {
            throw validation_error("line " + std::to_string(lineno) + ": time "
                + std::to_string(ev.t) + " outside [0, " + std::to_string(*horizon) + "]");
        }
        events.push_back(ev);
    });
    if (!num_types) throw parse_error(0, "missing header record");
    return EventSequence(std::move(events), *num_types, *horizon);
}

inline EventSequence read_event_file(const std::string& path) {
    auto in = open_input(path);
    return parse_event_file(in);
}

inline void write_event_file(std::ostream& out, const EventSequence& seq) {
    write_record(out, json{{"num_types", seq.num_types()}, {"horizon", seq.horizon()}});
    for (const auto& ev: seq.events()) {
        write_record(out, json{{"t", ev.t}, {"e", ev.type}});
    }
}

inline void write_event_file(const std::string& path, const EventSequence& seq) {
    auto out = open_output(path);
    write_event_file(out, seq);
}

// Splits on the time axis at fraction·T. The test part is shifted to start at 0.
inline std::pair<EventSequence, EventSequence> split_train_test(const EventSequence& seq, double fraction) {
    if (!(fraction > 0 && fraction < 1)) throw validation_error("split fraction must lie in (0, 1)");
    const double cut = fraction*seq.horizon();
    std::vector<Event> train, test;
    for (const auto& ev: seq.events()) {
        if (ev.t < cut) train.push_back(ev);
        else test.push_back({ev.t - cut, ev.type});
    }
    const double test_horizon = seq.horizon() - cut;
    for (auto& ev: test) ev.t = std::min(ev.t, test_horizon);
    return {EventSequence(std::move(train), seq.num_types(), cut),
            EventSequence(std::move(test), seq.num_types(), test_horizon)};
}

// One train per event type; same-type ties are pushed forward by tie_epsilon.
inline std::vector<SpikeTrain> encode_as_spikes(const EventSequence& seq) {
    std::vector<SpikeTrain> trains(seq.num_types());
    for (std::size_t e = 0; e < trains.size(); ++e) trains[e].neuron = e;
    for (const auto& ev: seq.events()) {
        auto& times = trains[ev.type].times;
        double t = ev.t;
        if (!times.empty() && t <= times.back()) t = times.back() + tie_epsilon;
        times.push_back(t);
    }
    return trains;
}

} // namespace sdgn
