// Experiment configuration: JSON loading, schema checks, system builders.
#pragma once

#include "fdecay/measures.hpp"
#include "fdecay/nonconformal.hpp"

#include "json.hpp"

#include <map>
#include <string>

namespace fdecay::cli {

using json = nlohmann::json;

// Parsed config document with enough of the source kept to point at lines.
// Problems are thrown as ConfigError carrying "file:line:col: /pointer: ...".
class ConfigDoc {
public:
    static ConfigDoc parse(const std::string& text, const std::string& name);
    static ConfigDoc load(const std::string& path);

    const json& root() const { return root_; }
    const std::string& name() const { return name_; }
    // "name:line:col" for a JSON pointer, falling back to the pointer alone.
    std::string locate(const std::string& pointer) const;
    [[noreturn]] void fail(const std::string& pointer, const std::string& msg) const;

private:
    json root_;
    std::string name_;
    std::map<std::string, std::pair<int, int>> where_;   // pointer -> line, column
};

// One parameter of a subcommand: type tag plus default.
//   number, int, bool, string, numbers, ints, int_matrix, vectors, number?
// A string type may list choices as "string:a|b|c".
struct ParamSpec {
    std::string key;
    std::string type;
    json value;
    std::string help;
};

struct CommandSchema {
    std::string name;
    std::string summary;
    bool needs_system = true;
    std::vector<ParamSpec> params;
};

const std::vector<CommandSchema>& command_schemas();
const CommandSchema& command_schema(const std::string& name);

// params merged over the defaults; unknown keys and type mismatches throw.
json resolve_params(const ConfigDoc& doc, const CommandSchema& schema);

// System builders. `pointer` is the JSON pointer of the node (for messages).
std::shared_ptr<IFSSystem> build_system(const ConfigDoc& doc, const json& node, const std::string& pointer);
std::shared_ptr<MarkovMeasure> build_measure(const ConfigDoc& doc, std::shared_ptr<IFSSystem> sys,
                                             const json* node, const std::string& pointer);
std::shared_ptr<RestrictedProductIFS> build_product(const ConfigDoc& doc, const json& node,
                                                    const std::string& pointer);
bool is_product(const json& system);

// Number or "p/q" string.
double read_number(const ConfigDoc& doc, const json& v, const std::string& pointer);

}  // namespace fdecay::cli
