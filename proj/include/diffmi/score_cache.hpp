#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/csv.hpp"

namespace diffmi {

/// Membership label on a score record. Unknown is legitimate: the attacker
/// scores the target example without knowing the answer.
enum class Membership : int { Unknown = -1, Nonmember = 0, Member = 1 };

inline Membership membership_from_int(int v) {
    switch (v) {
        case -1: return Membership::Unknown;
        case 0: return Membership::Nonmember;
        case 1: return Membership::Member;
    }
    throw ParseError("label must be -1, 0 or 1, got " + std::to_string(v));
}

struct ScoreRecord {
    std::int64_t id = 0;
    int t = 0;
    double score = 0.0;
    Membership label = Membership::Unknown;

    friend bool operator==(const ScoreRecord& a, const ScoreRecord& b) {
        return a.id == b.id && a.t == b.t && a.score == b.score && a.label == b.label;
    }
};

class ScoreCache {
  public:
    ScoreCache() = default;

    void add(ScoreRecord rec) {
        if (rec.score < 0.0)
            throw ContractError("score for id " + std::to_string(rec.id) +
                                " is negative (" + fmt_double(rec.score) + ")");
        if (!keys_.insert({rec.id, rec.t}).second)
            throw ContractError("duplicate record for id " + std::to_string(rec.id) +
                                ", t " + std::to_string(rec.t));
        records_.push_back(rec);
    }

    const std::vector<ScoreRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    std::vector<double> scores() const {
        std::vector<double> out;
        out.reserve(records_.size());
        for (const auto& r : records_) out.push_back(r.score);
        return out;
    }

    friend bool operator==(const ScoreCache& a, const ScoreCache& b) {
        return a.records_ == b.records_;
    }

  private:
    std::vector<ScoreRecord> records_;
    std::set<std::pair<std::int64_t, int>> keys_;
};

inline void save_scores(const ScoreCache& cache, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    out << "id,t,score,label\n";
    for (const auto& r : cache.records()) {
        out << r.id << ',' << r.t << ',' << fmt_double(r.score) << ','
            << static_cast<int>(r.label) << '\n';
    }
    if (!out) throw ParseError("write failed for " + path.string());
}

inline ScoreCache load_scores(const std::filesystem::path& path) {
    const std::vector<std::string> lines = read_lines(path.string());
    if (lines.empty()) throw ParseError(path.string() + ": empty file, expected header");
    if (lines[0] != "id,t,score,label")
        throw ParseError(path.string() + ":1: bad header '" + lines[0] + "'");

    ScoreCache cache;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string where = path.string() + ":" + std::to_string(i + 1);
        if (lines[i].empty()) continue;
        const auto fields = split_csv_line(lines[i]);
        if (fields.size() != 4)
            throw ParseError(where + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        ScoreRecord rec;
        rec.id = parse_int(fields[0], where);
        rec.t = static_cast<int>(parse_int(fields[1], where));
        rec.score = parse_double(fields[2], where);
        try {
            rec.label = membership_from_int(static_cast<int>(parse_int(fields[3], where)));
        } catch (const ParseError& e) {
            std::string msg(e.what());
            if (msg.rfind(where, 0) == 0) throw;
            throw ParseError(where + ": " + msg);
        }
        if (rec.score < 0.0)
            throw ParseError(where + ": negative score " + std::string(fields[2]));
        try {
            cache.add(rec);
        } catch (const ContractError& e) {
            throw ParseError(where + ": " + std::string(e.what()));
        }
    }
    return cache;
}

}  // namespace diffmi
