#include "remi/midi_io.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace remi::midi {

namespace {

constexpr double kDefaultBpm = 120.0;

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    std::size_t remaining() const { return bytes.size() - pos; }

    std::uint8_t u8(const char* what) {
        if (eof()) throw ParseError(std::string("truncated input reading ") + what, pos);
        return bytes[pos++];
    }

    std::uint8_t peek(const char* what) const {
        if (eof()) throw ParseError(std::string("truncated input reading ") + what, pos);
        return bytes[pos];
    }

    std::uint32_t u16(const char* what) {
        std::uint32_t hi = u8(what), lo = u8(what);
        return (hi << 8) | lo;
    }

    std::uint32_t u32(const char* what) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8(what);
        return v;
    }

    // Variable-length quantity, 7 bits per byte, at most 4 bytes.
    std::uint32_t vlq(const char* what) {
        std::uint32_t value = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t b = u8(what);
            value = (value << 7) | (b & 0x7f);
            if ((b & 0x80) == 0) return value;
        }
        throw ParseError(std::string("overlong variable-length quantity in ") + what, pos);
    }

    void skip(std::size_t n, const char* what) {
        if (remaining() < n) throw ParseError(std::string("truncated ") + what, pos);
        pos += n;
    }

    void expect(const char* tag, const char* what) {
        for (std::size_t i = 0; i < 4; ++i) {
            if (u8(what) != static_cast<std::uint8_t>(tag[i]))
                throw ParseError(std::string("missing ") + tag + " signature", pos - 1);
        }
    }
};

struct OpenNote {
    std::int64_t onset;
    int velocity;
};

struct TrackAccumulator {
    std::vector<Note>& notes;
    std::vector<TempoMarking>& tempi;
    std::map<int, std::deque<OpenNote>> open; // pitch -> sounding notes, FIFO

    void note_on(int pitch, int velocity, std::int64_t tick) {
        // A second Note-On on a sounding pitch closes the first note at the
        // new onset.
        auto it = open.find(pitch);
        if (it != open.end() && !it->second.empty()) close(pitch, tick);
        open[pitch].push_back({tick, velocity});
    }

    void close(int pitch, std::int64_t tick) {
        auto it = open.find(pitch);
        if (it == open.end() || it->second.empty()) return; // unmatched Note-Off, ignore
        OpenNote n = it->second.front();
        it->second.pop_front();
        notes.push_back({pitch, n.velocity, n.onset, std::max<std::int64_t>(1, tick - n.onset)});
    }

    void close_all(std::int64_t tick) {
        for (auto& [pitch, queue] : open) {
            while (!queue.empty()) close(pitch, tick);
        }
    }
};

void parse_track(Reader& r, std::vector<Note>& notes, std::vector<TempoMarking>& tempi,
                 TimeSignature& time_sig, bool& saw_time_sig) {
    r.expect("MTrk", "track header");
    std::uint32_t length = r.u32("track length");
    if (r.remaining() < length) throw ParseError("truncated track chunk", r.pos);
    std::size_t track_end = r.pos + length;

    TrackAccumulator acc{notes, tempi, {}};
    std::int64_t tick = 0;
    int running_status = 0;

    while (r.pos < track_end) {
        tick += r.vlq("delta time");
        std::uint8_t status = r.peek("event status");
        if (status & 0x80) {
            r.u8("event status");
        } else {
            if (running_status == 0) throw ParseError("data byte without running status", r.pos);
            status = static_cast<std::uint8_t>(running_status);
        }

        if (status == 0xff) { // meta event
            running_status = 0;
            std::uint8_t type = r.u8("meta type");
            std::uint32_t len = r.vlq("meta length");
            if (r.remaining() < len) throw ParseError("truncated meta event", r.pos);
            std::size_t body = r.pos;
            if (type == 0x51) { // tempo, microseconds per quarter note
                if (len != 3) throw ParseError("malformed tempo meta event", body);
                std::uint32_t usec = (static_cast<std::uint32_t>(r.bytes[body]) << 16) |
                                     (static_cast<std::uint32_t>(r.bytes[body + 1]) << 8) |
                                     r.bytes[body + 2];
                if (usec == 0) throw ParseError("zero tempo", body);
                tempi.push_back({tick, 60000000.0 / usec});
            } else if (type == 0x58) { // time signature
                if (len < 2) throw ParseError("malformed time signature meta event", body);
                int numerator = r.bytes[body];
                int denominator = 1 << r.bytes[body + 1];
                if (numerator != 4 || denominator != 4)
                    throw ParseError("unsupported time signature " + std::to_string(numerator) +
                                         "/" + std::to_string(denominator),
                                     body);
                time_sig = {4, 4};
                saw_time_sig = true;
            } else if (type == 0x2f) { // end of track
                r.skip(len, "meta event");
                acc.close_all(tick);
                r.pos = track_end;
                return;
            }
            r.pos = body + len;
            continue;
        }
        if (status == 0xf0 || status == 0xf7) { // sysex: skip payload
            running_status = 0;
            std::uint32_t len = r.vlq("sysex length");
            r.skip(len, "sysex event");
            continue;
        }
        if (status >= 0xf1) throw ParseError("unexpected system message", r.pos);

        running_status = status;
        int kind = status >> 4;
        int d1 = r.u8("event data");
        if (d1 & 0x80) throw ParseError("invalid data byte", r.pos - 1);
        switch (kind) {
        case 0x8: { // note off
            int d2 = r.u8("event data");
            (void)d2;
            acc.close(d1, tick);
            break;
        }
        case 0x9: { // note on (velocity 0 = note off)
            int d2 = r.u8("event data");
            if (d2 & 0x80) throw ParseError("invalid data byte", r.pos - 1);
            if (d2 == 0)
                acc.close(d1, tick);
            else
                acc.note_on(d1, d2, tick);
            break;
        }
        case 0xa: // polyphonic aftertouch
        case 0xb: // controller
        case 0xe: // pitch bend
            r.u8("event data");
            break;
        case 0xc: // program change
        case 0xd: // channel aftertouch
            break;
        default:
            throw ParseError("unknown event status", r.pos);
        }
    }
    // track data ran out without an end-of-track meta
    acc.close_all(tick);
}

void normalize(Performance& perf) {
    std::sort(perf.notes.begin(), perf.notes.end(), [](const Note& a, const Note& b) {
        return std::tuple(a.onset, a.pitch, a.duration, a.velocity) <
               std::tuple(b.onset, b.pitch, b.duration, b.velocity);
    });
    std::stable_sort(perf.tempo_map.begin(), perf.tempo_map.end(),
                     [](const TempoMarking& a, const TempoMarking& b) { return a.tick < b.tick; });
    // keep the last marking of any same-tick run
    std::vector<TempoMarking> dedup;
    for (const auto& m : perf.tempo_map) {
        if (!dedup.empty() && dedup.back().tick == m.tick)
            dedup.back() = m;
        else
            dedup.push_back(m);
    }
    perf.tempo_map = std::move(dedup);
    if (perf.tempo_map.empty() || perf.tempo_map.front().tick != 0)
        perf.tempo_map.insert(perf.tempo_map.begin(), {0, kDefaultBpm});
}

void write_vlq(std::vector<std::uint8_t>& out, std::uint64_t value) {
    std::uint8_t chunks[5];
    int n = 0;
    do {
        chunks[n++] = static_cast<std::uint8_t>(value & 0x7f);
        value >>= 7;
    } while (value != 0);
    for (int i = n - 1; i > 0; --i) out.push_back(chunks[i] | 0x80);
    out.push_back(chunks[0]);
}

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

struct Event {
    std::int64_t tick;
    int order; // 0 tempo, 1 time signature, 2 note-off, 3 note-on
    int pitch = 0;
    int velocity = 0;
    double bpm = 0.0;
};

} // namespace

Performance parse_smf(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    r.expect("MThd", "file header");
    std::uint32_t header_len = r.u32("header length");
    if (header_len < 6) throw ParseError("malformed header length", r.pos - 4);
    std::uint32_t format = r.u16("format");
    std::uint32_t n_tracks = r.u16("track count");
    std::uint32_t division = r.u16("division");
    r.skip(header_len - 6, "header");
    if (format > 1)
        throw ParseError("unknown format value " + std::to_string(format), r.pos);
    if (division & 0x8000) throw ParseError("SMPTE time division unsupported", r.pos);
    if (division == 0) throw ParseError("zero ticks per beat", r.pos);

    Performance perf;
    perf.ticks_per_beat = static_cast<int>(division);
    bool saw_time_sig = false;
    for (std::uint32_t t = 0; t < n_tracks; ++t)
        parse_track(r, perf.notes, perf.tempo_map, perf.time_signature, saw_time_sig);
    normalize(perf);
    return perf;
}

std::vector<std::uint8_t> write_smf(const Performance& perf) {
    validate(perf);

    std::vector<Event> events;
    events.reserve(perf.notes.size() * 2 + perf.tempo_map.size() + 1);
    for (const auto& m : perf.tempo_map) events.push_back({m.tick, 0, 0, 0, m.bpm});
    events.push_back({0, 1});
    for (const auto& n : perf.notes) {
        events.push_back({n.onset, 3, n.pitch, n.velocity});
        events.push_back({n.onset + n.duration, 2, n.pitch});
    }
    // Note-offs before note-ons at the same tick so back-to-back same-pitch
    // notes reparse unchanged.
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return std::tuple(a.tick, a.order, a.pitch) < std::tuple(b.tick, b.order, b.pitch);
    });

    std::vector<std::uint8_t> track;
    std::int64_t prev_tick = 0;
    for (const auto& e : events) {
        write_vlq(track, static_cast<std::uint64_t>(e.tick - prev_tick));
        prev_tick = e.tick;
        switch (e.order) {
        case 0: {
            auto usec = static_cast<std::uint32_t>(std::llround(60000000.0 / e.bpm));
            track.push_back(0xff);
            track.push_back(0x51);
            track.push_back(0x03);
            track.push_back(static_cast<std::uint8_t>(usec >> 16));
            track.push_back(static_cast<std::uint8_t>(usec >> 8));
            track.push_back(static_cast<std::uint8_t>(usec));
            break;
        }
        case 1:
            track.insert(track.end(), {0xff, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
            break;
        case 2:
            track.push_back(0x80);
            track.push_back(static_cast<std::uint8_t>(e.pitch));
            track.push_back(0x40);
            break;
        case 3:
            track.push_back(0x90);
            track.push_back(static_cast<std::uint8_t>(e.pitch));
            track.push_back(static_cast<std::uint8_t>(e.velocity));
            break;
        }
    }
    write_vlq(track, 0);
    track.insert(track.end(), {0xff, 0x2f, 0x00});

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    write_u32(out, 6);
    write_u16(out, 0); // format 0
    write_u16(out, 1);
    write_u16(out, static_cast<std::uint32_t>(perf.ticks_per_beat));
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    write_u32(out, static_cast<std::uint32_t>(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

double bpm_at(const Performance& perf, std::int64_t tick) {
    double bpm = kDefaultBpm;
    for (const auto& m : perf.tempo_map) {
        if (m.tick > tick) break;
        bpm = m.bpm;
    }
    return bpm;
}

void validate(const Performance& perf) {
    if (perf.ticks_per_beat <= 0) throw std::invalid_argument("ticks_per_beat must be positive");
    if (perf.ticks_per_beat > 0x7fff)
        throw std::invalid_argument("ticks_per_beat exceeds the SMF division field");
    if (perf.time_signature != TimeSignature{4, 4})
        throw std::invalid_argument("unsupported time signature (only 4/4)");
    std::map<int, std::int64_t> last_end; // per pitch
    const Note* prev = nullptr;
    for (const auto& n : perf.notes) {
        if (n.pitch < 0 || n.pitch > 127) throw std::invalid_argument("pitch out of range");
        if (n.velocity < 1 || n.velocity > 127) throw std::invalid_argument("velocity out of range");
        if (n.onset < 0) throw std::invalid_argument("negative onset");
        if (n.duration < 1) throw std::invalid_argument("duration must be >= 1");
        if (prev && std::tuple(prev->onset, prev->pitch) > std::tuple(n.onset, n.pitch))
            throw std::invalid_argument("notes not sorted by (onset, pitch)");
        auto it = last_end.find(n.pitch);
        if (it != last_end.end() && n.onset < it->second)
            throw std::invalid_argument("overlapping same-pitch notes");
        last_end[n.pitch] = n.onset + n.duration;
        prev = &n;
    }
    if (perf.tempo_map.empty() || perf.tempo_map.front().tick != 0)
        throw std::invalid_argument("tempo map must start at tick 0");
    for (std::size_t i = 0; i < perf.tempo_map.size(); ++i) {
        if (perf.tempo_map[i].bpm <= 0) throw std::invalid_argument("non-positive tempo");
        if (i > 0 && perf.tempo_map[i].tick <= perf.tempo_map[i - 1].tick)
            throw std::invalid_argument("tempo map not strictly sorted by tick");
    }
}

} // namespace remi::midi
