#include "sider/config.hpp"

#include <sodium.h>

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sider {

using nlohmann::json;

namespace {

[[noreturn]] void missing(const std::string& key) { throw ConfigError("missing config key: " + key); }
[[noreturn]] void bad_type(const std::string& key) { throw ConfigError("wrong type for config key: " + key); }

const json& block(const json& root, const std::string& name) {
    if (!root.contains(name)) missing(name);
    if (!root.at(name).is_object()) bad_type(name);
    return root.at(name);
}

template <typename T>
void opt(const json& b, const std::string& block_name, const std::string& key, T& out) {
    if (!b.contains(key)) return;
    try {
        out = b.at(key).get<T>();
    } catch (const json::exception&) {
        bad_type(block_name + "." + key);
    }
}

void check_known(const json& b, const std::string& block_name, const std::set<std::string>& known) {
    for (auto it = b.begin(); it != b.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown config key: " + block_name + "." + it.key());
}

}  // namespace

void PipelineConfig::validate() const {
    if (data.resolution < 16 || data.resolution % 4 != 0)
        throw ConfigError("data.resolution must be >= 16 and divisible by 4");
    if (data.n_identities < 2) throw ConfigError("data.n_identities must be >= 2");
    if (data.per_identity < 1) throw ConfigError("data.per_identity must be >= 1");
    if (diffusion.T < 1) throw ConfigError("diffusion.T must be >= 1");
    if (!(diffusion.beta_min > 0 && diffusion.beta_min <= diffusion.beta_max && diffusion.beta_max < 1))
        throw ConfigError("diffusion.beta_min/beta_max must satisfy 0 < min <= max < 1");
    if (!(diffusion.strength > 0 && diffusion.strength <= 1))
        throw ConfigError("diffusion.strength must be in (0,1]");
    if (diffusion.s < 0 || diffusion.lambda < 0) throw ConfigError("diffusion.s and lambda must be >= 0");
    if (diffusion.ae_mode != "conv" && diffusion.ae_mode != "identity")
        throw ConfigError("diffusion.ae_mode must be conv or identity");
    if (!(diffusion.p_drop >= 0 && diffusion.p_drop <= 1)) throw ConfigError("diffusion.p_drop in [0,1]");
    if (attack.N < 0) throw ConfigError("attack.N must be >= 0");
    if (!(attack.alpha > 0)) throw ConfigError("attack.alpha must be > 0");
    if (attack.mu < 0) throw ConfigError("attack.mu must be >= 0");
    if (attack.mask_mode != "oval" && attack.mask_mode != "full" && attack.mask_mode != "external")
        throw ConfigError("attack.mask_mode must be oval, full or external");
    if (attack.seeds.size() != 2) throw ConfigError("attack.seeds must hold exactly 2 seeds");
    if (attack.seeds[0] == attack.seeds[1]) throw ConfigError("attack.seeds must differ");
    if (crm.blocks_per_stack < 1) throw ConfigError("crm.blocks_per_stack must be >= 1");
    if (crm.loss_weights.size() != 5) throw ConfigError("crm.loss_weights must hold 5 weights");
    for (real w : crm.loss_weights)
        if (w < 0) throw ConfigError("crm.loss_weights must be nonnegative");
    if (!(eval.far_target > 0 && eval.far_target <= 1)) throw ConfigError("eval.far_target in (0,1]");
    if (eval.n_test < 1) throw ConfigError("eval.n_test must be >= 1");
}

std::string PipelineConfig::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["data"] = {{"source", data.source},
                 {"resolution", data.resolution},
                 {"n_identities", data.n_identities},
                 {"per_identity", data.per_identity},
                 {"seed", data.seed}};
    j["diffusion"] = {{"T", diffusion.T},
                      {"beta_min", diffusion.beta_min},
                      {"beta_max", diffusion.beta_max},
                      {"strength", diffusion.strength},
                      {"s", diffusion.s},
                      {"lambda", diffusion.lambda},
                      {"d_cond", diffusion.d_cond},
                      {"width", diffusion.width},
                      {"ae_mode", diffusion.ae_mode},
                      {"ae_epochs", diffusion.ae_epochs},
                      {"epochs", diffusion.epochs},
                      {"p_drop", diffusion.p_drop},
                      {"lr", diffusion.lr},
                      {"ae_lr", diffusion.ae_lr},
                      {"seed", diffusion.seed}};
    j["attack"] = {{"N", attack.N},         {"alpha", attack.alpha},
                   {"mu", attack.mu},       {"mask_mode", attack.mask_mode},
                   {"mask_path", attack.mask_path}, {"seeds", attack.seeds}};
    j["crm"] = {{"blocks_per_stack", crm.blocks_per_stack},
                {"hidden", crm.hidden},
                {"key_channels", crm.key_channels},
                {"loss_weights", crm.loss_weights},
                {"epochs", crm.epochs},
                {"lr", crm.lr},
                {"seed", crm.seed},
                {"train_triples", crm.train_triples}};
    j["eval"] = {{"far_target", eval.far_target},
                 {"n_test", eval.n_test},
                 {"embed_dim", eval.embed_dim},
                 {"embedder_epochs", eval.embedder_epochs},
                 {"embedder_lr", eval.embedder_lr},
                 {"seed", eval.seed}};
    return j.dump(2);
}

std::string PipelineConfig::config_hash() const {
    std::string text = to_json();
    unsigned char out[16];
    crypto_generichash(out, sizeof out, (const unsigned char*)text.data(), text.size(), nullptr, 0);
    char hex[33];
    sodium_bin2hex(hex, sizeof hex, out, 16);
    return hex;
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");
    check_known(root, "", {"schema_version", "data", "diffusion", "attack", "crm", "eval"});

    PipelineConfig c;
    const json& d = block(root, "data");
    check_known(d, "data", {"source", "resolution", "n_identities", "per_identity", "seed"});
    if (!d.contains("source")) missing("data.source");
    opt(d, "data", "source", c.data.source);
    opt(d, "data", "resolution", c.data.resolution);
    opt(d, "data", "n_identities", c.data.n_identities);
    opt(d, "data", "per_identity", c.data.per_identity);
    opt(d, "data", "seed", c.data.seed);

    const json& f = block(root, "diffusion");
    check_known(f, "diffusion",
                {"T", "beta_min", "beta_max", "strength", "s", "lambda", "d_cond", "width", "ae_mode",
                 "ae_epochs", "epochs", "p_drop", "lr", "ae_lr", "seed"});
    opt(f, "diffusion", "T", c.diffusion.T);
    opt(f, "diffusion", "beta_min", c.diffusion.beta_min);
    opt(f, "diffusion", "beta_max", c.diffusion.beta_max);
    opt(f, "diffusion", "strength", c.diffusion.strength);
    opt(f, "diffusion", "s", c.diffusion.s);
    opt(f, "diffusion", "lambda", c.diffusion.lambda);
    opt(f, "diffusion", "d_cond", c.diffusion.d_cond);
    opt(f, "diffusion", "width", c.diffusion.width);
    opt(f, "diffusion", "ae_mode", c.diffusion.ae_mode);
    opt(f, "diffusion", "ae_epochs", c.diffusion.ae_epochs);
    opt(f, "diffusion", "epochs", c.diffusion.epochs);
    opt(f, "diffusion", "p_drop", c.diffusion.p_drop);
    opt(f, "diffusion", "lr", c.diffusion.lr);
    opt(f, "diffusion", "ae_lr", c.diffusion.ae_lr);
    opt(f, "diffusion", "seed", c.diffusion.seed);

    const json& a = block(root, "attack");
    check_known(a, "attack", {"N", "alpha", "mu", "mask_mode", "mask_path", "seeds", "lambda_s", "strength"});
    opt(a, "attack", "N", c.attack.N);
    opt(a, "attack", "alpha", c.attack.alpha);
    opt(a, "attack", "mu", c.attack.mu);
    opt(a, "attack", "mask_mode", c.attack.mask_mode);
    opt(a, "attack", "mask_path", c.attack.mask_path);
    opt(a, "attack", "seeds", c.attack.seeds);
    // the attack block may override the effective guidance and strength
    if (a.contains("lambda_s")) {
        real ls = 0;
        opt(a, "attack", "lambda_s", ls);
        c.diffusion.lambda = ls;
        c.diffusion.s = 1.0;
    }
    if (a.contains("strength")) opt(a, "attack", "strength", c.diffusion.strength);

    const json& r = block(root, "crm");
    check_known(r, "crm",
                {"blocks_per_stack", "hidden", "key_channels", "loss_weights", "epochs", "lr", "seed",
                 "train_triples"});
    opt(r, "crm", "blocks_per_stack", c.crm.blocks_per_stack);
    opt(r, "crm", "hidden", c.crm.hidden);
    opt(r, "crm", "key_channels", c.crm.key_channels);
    opt(r, "crm", "loss_weights", c.crm.loss_weights);
    opt(r, "crm", "epochs", c.crm.epochs);
    opt(r, "crm", "lr", c.crm.lr);
    opt(r, "crm", "seed", c.crm.seed);
    opt(r, "crm", "train_triples", c.crm.train_triples);

    const json& e = block(root, "eval");
    check_known(e, "eval", {"far_target", "n_test", "embed_dim", "embedder_epochs", "embedder_lr", "seed"});
    opt(e, "eval", "far_target", c.eval.far_target);
    opt(e, "eval", "n_test", c.eval.n_test);
    opt(e, "eval", "embed_dim", c.eval.embed_dim);
    opt(e, "eval", "embedder_epochs", c.eval.embedder_epochs);
    opt(e, "eval", "embedder_lr", c.eval.embedder_lr);
    opt(e, "eval", "seed", c.eval.seed);

    c.validate();
    return c;
}

// minimal TOML subset: [section], key = value, strings/numbers/booleans and
// flat arrays, # comments
PipelineConfig PipelineConfig::from_toml_text(const std::string& text) {
    json root = json::object();
    json* section = &root;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto parse_scalar = [](const std::string& tok) -> json {
        std::string t = tok;
        while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.erase(t.begin());
        while (!t.empty() && (t.back() == ' ' || t.back() == '\t' || t.back() == '\r')) t.pop_back();
        if (t.size() >= 2 && t.front() == '"' && t.back() == '"') return t.substr(1, t.size() - 2);
        if (t == "true") return true;
        if (t == "false") return false;
        try {
            if (t.find_first_of(".eE") != std::string::npos && t.find("0x") != 0)
                return std::stod(t);
            return std::stoull(t);
        } catch (...) {
            throw ConfigError("config parse error: bad TOML value '" + t + "'");
        }
    };
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // keep # inside quotes
            size_t q1 = line.find('"');
            if (q1 == std::string::npos || q1 > hash) line = line.substr(0, hash);
        }
        std::string s = line;
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("config parse error: bad TOML section at line " +
                                                   std::to_string(lineno));
            std::string name = s.substr(1, s.size() - 2);
            section = &root[name];
            if (!section->is_object()) *section = json::object();
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config parse error: expected key = value at line " + std::to_string(lineno));
        std::string key = s.substr(0, eq);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string val = s.substr(eq + 1);
        while (!val.empty() && (val.front() == ' ' || val.front() == '\t')) val.erase(val.begin());
        if (!val.empty() && val.front() == '[') {
            if (val.back() != ']') throw ConfigError("config parse error: unterminated array at line " +
                                                     std::to_string(lineno));
            json arr = json::array();
            std::string body = val.substr(1, val.size() - 2);
            std::string tok;
            std::istringstream bs(body);
            while (std::getline(bs, tok, ','))
                if (tok.find_first_not_of(" \t") != std::string::npos) arr.push_back(parse_scalar(tok));
            (*section)[key] = arr;
        } else {
            (*section)[key] = parse_scalar(val);
        }
    }
    return from_json_text(root.dump());
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml")
        return from_toml_text(buf.str());
    return from_json_text(buf.str());
}

}  // namespace sider
