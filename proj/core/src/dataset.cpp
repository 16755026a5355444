#include "promptcal/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "promptcal/rng.hpp"
#include "promptcal/text.hpp"

namespace promptcal {

using json = nlohmann::json;

namespace {

const char* const kCoreFields[] = {"id", "question", "options", "answer", "image"};

bool is_core_field(const std::string& key) {
    for (const char* f : kCoreFields)
        if (key == f) return true;
    return false;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return ss.str();
}

int answer_to_index(const json& answer, std::size_t line, int k) {
    if (answer.is_number_integer()) return answer.get<int>();
    if (answer.is_string()) {
        const std::string s = trim(answer.get<std::string>());
        if (s.size() == 1 && ((s[0] >= 'A' && s[0] <= 'Z') || (s[0] >= 'a' && s[0] <= 'z')))
            return option_index(s[0]);
        // tolerate digit strings from loosely converted sources
        if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos)
            return std::stoi(s);
        throw SchemaError(line, "answer", "expected option letter or index, got '" + s + "'");
    }
    throw SchemaError(line, "answer", "expected integer or string");
    (void)k;
}

Query parse_record(const std::string& text, std::size_t line) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(line, "(json)", e.what());
    }
    if (!obj.is_object()) throw SchemaError(line, "(json)", "record is not an object");

    Query q;
    if (!obj.contains("id")) throw SchemaError(line, "id", "missing");
    if (obj["id"].is_string())
        q.id = obj["id"].get<std::string>();
    else if (obj["id"].is_number_integer())
        q.id = std::to_string(obj["id"].get<long long>());
    else
        throw SchemaError(line, "id", "expected string or integer");

    if (!obj.contains("question") || !obj["question"].is_string())
        throw SchemaError(line, "question", obj.contains("question") ? "expected string" : "missing");
    q.question = obj["question"].get<std::string>();

    if (!obj.contains("options") || !obj["options"].is_array())
        throw SchemaError(line, "options", obj.contains("options") ? "expected array" : "missing");
    for (const auto& opt : obj["options"]) {
        if (!opt.is_string()) throw SchemaError(line, "options", "options must be strings");
        q.options.push_back(opt.get<std::string>());
    }

    if (!obj.contains("answer")) throw SchemaError(line, "answer", "missing");
    q.truth_index = answer_to_index(obj["answer"], line, q.option_count());

    if (obj.contains("image")) {
        if (!obj["image"].is_string()) throw SchemaError(line, "image", "expected string");
        q.image_ref = obj["image"].get<std::string>();
    }

    json extras = json::object();
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!is_core_field(it.key())) extras[it.key()] = it.value();
    if (!extras.empty()) q.extras_json = extras.dump();

    q.validate(line);
    return q;
}

}  // namespace

Dataset parse_dataset(const std::string& jsonl, Split split_label) {
    Dataset ds;
    ds.split_label = split_label;
    std::unordered_map<std::string, std::size_t> first_line;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        std::size_t eol = jsonl.find('\n', pos);
        if (eol == std::string::npos) eol = jsonl.size();
        ++line_no;
        const std::string line = jsonl.substr(pos, eol - pos);
        pos = eol + 1;
        if (trim(line).empty()) {
            if (eol == jsonl.size()) break;
            continue;
        }
        Query q = parse_record(line, line_no);
        auto [it, inserted] = first_line.emplace(q.id, line_no);
        if (!inserted)
            throw DuplicateIdError("duplicate id '" + q.id + "' at line " +
                                   std::to_string(line_no) + " (first seen at line " +
                                   std::to_string(it->second) + ")");
        ds.records.push_back(std::move(q));
        if (eol == jsonl.size()) break;
    }
    return ds;
}

Dataset load_dataset(const std::string& path, Split split_label) {
    return parse_dataset(read_file(path), split_label);
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    for (const auto& q : dataset.records) {
        json obj;
        obj["id"] = q.id;
        obj["question"] = q.question;
        obj["options"] = q.options;
        obj["answer"] = q.truth_index;
        if (q.image_ref) obj["image"] = *q.image_ref;
        if (!q.extras_json.empty()) {
            const json extras = json::parse(q.extras_json);
            for (auto it = extras.begin(); it != extras.end(); ++it)
                if (!obj.contains(it.key())) obj[it.key()] = it.value();
        }
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << serialize_dataset(dataset);
    if (!out) throw IoError("write failure on '" + path + "'");
}

Dataset split_sample(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
    if (n > dataset.size())
        throw SizeError("sample size " + std::to_string(n) + " exceeds dataset size " +
                        std::to_string(dataset.size()));
    // Key every record by hash(seed, id) and take the n smallest keys: the
    // result depends on the id set, n and seed only, never on file order.
    struct Keyed {
        std::uint64_t key;
        const Query* q;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(dataset.size());
    for (const auto& q : dataset.records)
        keyed.push_back({hash_mix(seed, fnv1a64(q.id)), &q});
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.q->id < b.q->id;
    });

    Dataset out;
    out.split_label = dataset.split_label;
    out.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.records.push_back(*keyed[i].q);
    return out;
}

}  // namespace promptcal
