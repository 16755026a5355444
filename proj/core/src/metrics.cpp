#include "promptcal/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptcal/text.hpp"

namespace promptcal {

using json = nlohmann::json;

int bin_index(double confidence, int n_bins) {
    if (n_bins < 1) throw ConfigError("metrics: n_bins must be >= 1");
    // first boundary >= confidence; [0, 1/n] then left-open bins
    for (int i = 0; i < n_bins; ++i) {
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n_bins);
        if (confidence <= hi) return i;
    }
    return n_bins - 1;
}

namespace {

struct BinAccum {
    std::size_t count = 0;
    double conf_sum = 0.0;
    double acc_sum = 0.0;
};

std::vector<BinAccum> accumulate_bins(const std::vector<EvalRecord>& records, int n_bins,
                                      std::size_t* n_valid_out) {
    std::vector<BinAccum> bins(static_cast<std::size_t>(n_bins));
    std::size_t n_valid = 0;
    for (const auto& rec : records) {
        if (!rec.prediction.is_valid()) continue;
        ++n_valid;
        const auto& v = rec.prediction.as_valid();
        auto& b = bins[static_cast<std::size_t>(bin_index(v.confidence, n_bins))];
        ++b.count;
        b.conf_sum += v.confidence;
        b.acc_sum += (v.answer_index == rec.truth_index) ? 1.0 : 0.0;
    }
    if (n_valid_out) *n_valid_out = n_valid;
    return bins;
}

}  // namespace

double ece(const std::vector<EvalRecord>& records, int n_bins) {
    std::size_t n_valid = 0;
    const auto bins = accumulate_bins(records, n_bins, &n_valid);
    if (n_valid == 0) throw EmptyError("ece: no valid records");
    double total = 0.0;
    for (const auto& b : bins) {
        if (b.count == 0) continue;
        const double n = static_cast<double>(b.count);
        total += (n / static_cast<double>(n_valid)) * std::fabs(b.acc_sum / n - b.conf_sum / n);
    }
    return total;
}

double brier(const std::vector<EvalRecord>& records) {
    std::size_t n_valid = 0;
    double sum = 0.0;
    for (const auto& rec : records) {
        if (!rec.prediction.is_valid()) continue;
        ++n_valid;
        const auto& v = rec.prediction.as_valid();
        const double outcome = (v.answer_index == rec.truth_index) ? 1.0 : 0.0;
        const double d = v.confidence - outcome;
        sum += d * d;
    }
    if (n_valid == 0) throw EmptyError("brier: no valid records");
    return sum / static_cast<double>(n_valid);
}

double accuracy_all(const std::vector<EvalRecord>& records, std::size_t extra_incorrect) {
    if (records.empty()) throw EmptyError("accuracy_all: no records");
    std::size_t correct = 0;
    for (const auto& rec : records)
        if (rec.prediction.correct(rec.truth_index)) ++correct;
    return static_cast<double>(correct) /
           static_cast<double>(records.size() + extra_incorrect);
}

std::vector<ReliabilityBin> reliability_curve(const std::vector<EvalRecord>& records, int n_bins) {
    std::size_t n_valid = 0;
    const auto accum = accumulate_bins(records, n_bins, &n_valid);
    if (n_valid == 0) throw EmptyError("reliability_curve: no valid records");
    std::vector<ReliabilityBin> out;
    out.reserve(accum.size());
    for (int i = 0; i < n_bins; ++i) {
        const auto& a = accum[static_cast<std::size_t>(i)];
        ReliabilityBin bin;
        bin.lo = static_cast<double>(i) / static_cast<double>(n_bins);
        bin.hi = static_cast<double>(i + 1) / static_cast<double>(n_bins);
        bin.count = a.count;
        if (a.count > 0) {
            bin.mean_conf = a.conf_sum / static_cast<double>(a.count);
            bin.mean_acc = a.acc_sum / static_cast<double>(a.count);
        }
        out.push_back(bin);
    }
    return out;
}

CalibrationReport slice_report(const std::vector<EvalRecord>& records, double conf_threshold,
                               int n_bins, std::size_t extra_incorrect,
                               const std::string& method) {
    if (records.empty()) throw EmptyError("slice_report: no records");

    CalibrationReport rep;
    rep.method = method;
    rep.n_total = records.size();
    rep.n_bins = n_bins;
    rep.conf_threshold = conf_threshold;
    rep.extra_incorrect = extra_incorrect;
    rep.accuracy_all = accuracy_all(records, extra_incorrect);
    rep.meta["std_kind"] = "population";

    std::size_t n_valid = 0;
    std::size_t high_count = 0, high_correct = 0;
    std::size_t wrong_count = 0;
    double wrong_conf_sum = 0.0;
    for (const auto& rec : records) {
        if (!rec.prediction.is_valid()) continue;
        ++n_valid;
        const auto& v = rec.prediction.as_valid();
        const bool correct = v.answer_index == rec.truth_index;
        if (v.confidence >= conf_threshold) {
            ++high_count;
            if (correct) ++high_correct;
        }
        if (!correct) {
            ++wrong_count;
            wrong_conf_sum += v.confidence;
        }
    }
    rep.n_valid = n_valid;

    if (n_valid > 0) {
        rep.ece = ece(records, n_bins);
        rep.brier = brier(records);
        rep.bins = reliability_curve(records, n_bins);
    }
    if (high_count > 0)
        rep.high_conf_accuracy = static_cast<double>(high_correct) / static_cast<double>(high_count);
    if (wrong_count > 0) {
        const double mean = wrong_conf_sum / static_cast<double>(wrong_count);
        double sq = 0.0;
        for (const auto& rec : records) {
            if (!rec.prediction.is_valid()) continue;
            const auto& v = rec.prediction.as_valid();
            if (v.answer_index != rec.truth_index) {
                const double d = v.confidence - mean;
                sq += d * d;
            }
        }
        rep.avg_conf_incorrect = ConfStat{mean, std::sqrt(sq / static_cast<double>(wrong_count))};
    }
    return rep;
}

// -- serialization ------------------------------------------------------------

namespace {

json bin_to_json(const ReliabilityBin& b) {
    json j;
    j["lo"] = b.lo;
    j["hi"] = b.hi;
    j["count"] = b.count;
    j["mean_conf"] = b.mean_conf ? json(*b.mean_conf) : json(nullptr);
    j["mean_acc"] = b.mean_acc ? json(*b.mean_acc) : json(nullptr);
    return j;
}

ReliabilityBin bin_from_json(const json& j) {
    ReliabilityBin b;
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
    b.count = j.at("count").get<std::size_t>();
    if (!j.at("mean_conf").is_null()) b.mean_conf = j.at("mean_conf").get<double>();
    if (!j.at("mean_acc").is_null()) b.mean_acc = j.at("mean_acc").get<double>();
    return b;
}

}  // namespace

std::string report_to_json(const CalibrationReport& rep) {
    json j;
    j["schema_version"] = std::to_string(CalibrationReport::kSchemaMajor) + "." +
                          std::to_string(CalibrationReport::kSchemaMinor);
    j["method"] = rep.method;
    j["n_total"] = rep.n_total;
    j["n_valid"] = rep.n_valid;
    j["ece"] = rep.ece ? json(*rep.ece) : json(nullptr);
    j["brier"] = rep.brier ? json(*rep.brier) : json(nullptr);
    j["accuracy_all"] = rep.accuracy_all;
    j["high_conf_accuracy"] = rep.high_conf_accuracy ? json(*rep.high_conf_accuracy) : json(nullptr);
    if (rep.avg_conf_incorrect) {
        j["avg_conf_incorrect"] = {{"mean", rep.avg_conf_incorrect->mean},
                                   {"std", rep.avg_conf_incorrect->stddev}};
    } else {
        j["avg_conf_incorrect"] = nullptr;
    }
    j["bins"] = json::array();
    for (const auto& b : rep.bins) j["bins"].push_back(bin_to_json(b));
    j["n_bins"] = rep.n_bins;
    j["conf_threshold"] = rep.conf_threshold;
    j["extra_incorrect"] = rep.extra_incorrect;
    j["meta"] = rep.meta;
    return j.dump(2);
}

CalibrationReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("report: invalid JSON: ") + e.what());
    }
    const std::string ver = j.at("schema_version").get<std::string>();
    const auto dot = ver.find('.');
    const int major = std::stoi(ver.substr(0, dot));
    if (major != CalibrationReport::kSchemaMajor)
        throw ConfigError("report: unsupported schema_version " + ver + " (expected major " +
                          std::to_string(CalibrationReport::kSchemaMajor) + ")");

    CalibrationReport rep;
    rep.method = j.at("method").get<std::string>();
    rep.n_total = j.at("n_total").get<std::size_t>();
    rep.n_valid = j.at("n_valid").get<std::size_t>();
    if (!j.at("ece").is_null()) rep.ece = j.at("ece").get<double>();
    if (!j.at("brier").is_null()) rep.brier = j.at("brier").get<double>();
    rep.accuracy_all = j.at("accuracy_all").get<double>();
    if (!j.at("high_conf_accuracy").is_null())
        rep.high_conf_accuracy = j.at("high_conf_accuracy").get<double>();
    if (!j.at("avg_conf_incorrect").is_null())
        rep.avg_conf_incorrect = ConfStat{j.at("avg_conf_incorrect").at("mean").get<double>(),
                                          j.at("avg_conf_incorrect").at("std").get<double>()};
    for (const auto& b : j.at("bins")) rep.bins.push_back(bin_from_json(b));
    rep.n_bins = j.at("n_bins").get<int>();
    rep.conf_threshold = j.at("conf_threshold").get<double>();
    rep.extra_incorrect = j.at("extra_incorrect").get<std::size_t>();
    if (j.contains("meta"))
        for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it)
            rep.meta[it.key()] = it.value().get<std::string>();
    return rep;
}

void save_report(const CalibrationReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << report_to_json(rep) << '\n';
}

CalibrationReport load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

std::string reliability_csv(const std::vector<ReliabilityBin>& bins) {
    std::string out = "bin_lo,bin_hi,count,mean_conf,mean_acc\n";
    for (const auto& b : bins) {
        out += fmt_double(b.lo);
        out += ',';
        out += fmt_double(b.hi);
        out += ',';
        out += std::to_string(b.count);
        out += ',';
        if (b.mean_conf) out += fmt_double(*b.mean_conf);
        out += ',';
        if (b.mean_acc) out += fmt_double(*b.mean_acc);
        out += '\n';
    }
    return out;
}

std::string records_to_jsonl(const std::vector<EvalRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        json j;
        j["query_id"] = rec.query_id;
        j["truth_index"] = rec.truth_index;
        if (rec.prediction.is_valid()) {
            const auto& v = rec.prediction.as_valid();
            j["prediction"] = {{"kind", "valid"},
                               {"answer_index", v.answer_index},
                               {"confidence", v.confidence}};
        } else {
            const auto& inv = rec.prediction.as_invalid();
            j["prediction"] = {{"kind", "invalid"},
                               {"reason", to_string(inv.reason)},
                               {"raw_text", inv.raw_text}};
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<EvalRecord> records_from_jsonl(const std::string& jsonl) {
    std::vector<EvalRecord> out;
    std::istringstream in(jsonl);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(line_no, "(json)", e.what());
        }
        const auto& p = j.at("prediction");
        Prediction pred = p.at("kind").get<std::string>() == "valid"
                              ? Prediction::valid(p.at("answer_index").get<int>(),
                                                  p.at("confidence").get<double>())
                              : Prediction::invalid(
                                    p.at("raw_text").get<std::string>(),
                                    invalid_reason_from_string(p.at("reason").get<std::string>()));
        out.push_back(EvalRecord{j.at("query_id").get<std::string>(), pred,
                                 j.at("truth_index").get<int>()});
    }
    return out;
}

void save_records(const std::vector<EvalRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << records_to_jsonl(records);
}

std::vector<EvalRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return records_from_jsonl(ss.str());
}

}  // namespace promptcal
