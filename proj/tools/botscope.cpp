// botscope command-line front end. Each subcommand reads files, runs one
// pipeline stage and writes its output; stages talk to each other only
// through files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "botscope/botscope.hpp"

namespace fs = std::filesystem;
using namespace botscope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct Context {
  unsigned threads = default_thread_count();
  bool validation_failed = false;
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
}

template <typename T>
std::vector<T> take(LoadResult<T> result, const std::string& path, Context& ctx) {
  for (const auto& e : result.errors) {
    std::cerr << path << ":" << describe(e) << "\n";
    ctx.validation_failed = true;
  }
  return std::move(result.records);
}

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PropertyTemplate take_template(const std::string& path, Context& ctx) {
  auto loaded = load_template(path);
  for (const auto& e : loaded.errors) {
    std::cerr << path << ":" << describe(e) << "\n";
    ctx.validation_failed = true;
  }
  return std::move(loaded.tmpl);
}

PublicSuffixRules load_psl(const std::string& path) {
  auto rules = PublicSuffixRules::parse(read_text(path));
  if (rules.empty()) throw ConfigError(path + ": no public suffix rules");
  return rules;
}

Blocklist load_blocklist(const std::string& path, ListName name) {
  auto parsed = parse_blocklist(read_text(path), name);
  const auto& s = parsed.stats;
  if (s.exceptions + s.regex_rules + s.unsupported > 0)
    std::cerr << path << ": skipped " << s.exceptions << " exception, " << s.regex_rules << " regex and "
              << s.unsupported << " unsupported rules\n";
  return Blocklist(std::move(parsed.rules));
}

// -- scan-static -------------------------------------------------------------

struct ScanStaticArgs {
  std::string manifest, patterns, out;
  bool enable_bare = false;
};

void run_scan_static(const ScanStaticArgs& a, Context& ctx) {
  const auto records = take(load_manifest(a.manifest, ctx.threads), a.manifest, ctx);
  const PatternSet patterns =
      a.patterns.empty() ? PatternSet(default_patterns(a.enable_bare)) : compile_patterns(std::string_view(read_text(a.patterns)));
  const auto verdicts = scan_corpus(records, patterns, ctx.threads);
  for (const auto& v : verdicts)
    for (const auto& w : v.warnings) std::cerr << v.verdict.sha256 << ": " << w << "\n";
  write_output(a.out, to_jsonl(verdicts));
}

// -- scan-dynamic ------------------------------------------------------------

struct ScanDynamicArgs {
  std::string log, statics, honey, out;
  std::vector<std::string> extra_symbols;
};

void run_scan_dynamic(const ScanDynamicArgs& a, Context& ctx) {
  const auto log = take(load_call_log(a.log, ctx.threads), a.log, ctx);
  std::vector<ScriptVerdict> statics;
  if (!a.statics.empty()) statics = take(load_static_verdicts(a.statics, ctx.threads), a.statics, ctx);
  HoneyConfig honey;
  if (!a.honey.empty()) {
    honey = honey_from_json(read_json(a.honey));
    for (const auto& problem : validate_honey(honey)) {
      std::cerr << a.honey << ": " << problem << "\n";
      ctx.validation_failed = true;
    }
  }
  const auto verdicts = scan_dynamic(log, honey, index_static(statics), surface_symbols(a.extra_symbols));
  write_output(a.out, to_jsonl(verdicts));
}

// -- combine -----------------------------------------------------------------

struct CombineArgs {
  std::string statics, dynamics, out;
};

void run_combine(const CombineArgs& a, Context& ctx) {
  const auto statics = take(load_static_verdicts(a.statics, ctx.threads), a.statics, ctx);
  const auto dynamics = take(load_dynamic_verdicts(a.dynamics, ctx.threads), a.dynamics, ctx);
  write_output(a.out, to_json(combine(statics, dynamics)).dump(2) + "\n");
}

// -- fpdiff ------------------------------------------------------------------

struct FpdiffArgs {
  std::string baseline, candidate, kb, out;
};

void run_fpdiff(const FpdiffArgs& a, Context& ctx) {
  const auto baseline = take_template(a.baseline, ctx);
  const auto candidate = take_template(a.candidate, ctx);
  const IndicatorKB kb = a.kb.empty() ? default_kb() : kb_from_json(read_json(a.kb));
  const auto diff = diff_templates(baseline, candidate);
  json j = to_json(classify_surface(diff, baseline, candidate, kb));
  j["diff_counts"] = {{"missing", diff.missing.size()}, {"added", diff.added.size()}, {"changed", diff.changed.size()}};
  write_output(a.out, j.dump(2) + "\n");
}

// -- attribute ---------------------------------------------------------------

struct AttributeArgs {
  std::string statics, dynamics, psl, signatures, out, tally;
  bool include_uncertain = false;
};

void run_attribute(const AttributeArgs& a, Context& ctx) {
  std::vector<ScriptVerdict> statics;
  std::vector<DynamicVerdict> dynamics;
  if (!a.statics.empty()) statics = take(load_static_verdicts(a.statics, ctx.threads), a.statics, ctx);
  if (!a.dynamics.empty()) dynamics = take(load_dynamic_verdicts(a.dynamics, ctx.threads), a.dynamics, ctx);
  const auto rules = load_psl(a.psl);
  const SignatureSet signatures =
      a.signatures.empty() ? SignatureSet(default_signatures()) : signatures_from_json(read_json(a.signatures));
  const auto inclusions = collect_inclusions(statics, dynamics, rules, signatures, {a.include_uncertain});
  write_output(a.out, to_jsonl(inclusions));
  if (!a.tally.empty()) {
    const auto tally = tally_third_party(inclusions);
    json rows = json::array();
    for (const auto& r : tally.rows) rows.push_back({{"domain", r.domain}, {"sites", r.sites}, {"pct", r.percent}});
    json clusters = json::array();
    for (const auto& c : cluster_by_hash(inclusions)) clusters.push_back({{"sha256", c.sha256}, {"sites", c.sites}});
    json providers = json::array();
    for (const auto& p : provider_tally(inclusions)) providers.push_back({{"provider", p.provider}, {"sites", p.sites}});
    write_output(a.tally, json{{"third_party", {{"total", tally.total}, {"rows", std::move(rows)}}},
                               {"clusters", std::move(clusters)},
                               {"providers", std::move(providers)}}
                              .dump(2) +
                              "\n");
  }
}

// -- compare-runs ------------------------------------------------------------

struct CompareArgs {
  std::string a, b, easylist, easyprivacy, out;
};

void run_compare(const CompareArgs& a, Context& ctx) {
  const auto run_a = take(load_requests(a.a, ctx.threads), a.a, ctx);
  const auto run_b = take(load_requests(a.b, ctx.threads), a.b, ctx);
  std::optional<Blocklist> easylist, easyprivacy;
  if (!a.easylist.empty()) easylist = load_blocklist(a.easylist, ListName::easylist);
  if (!a.easyprivacy.empty()) easyprivacy = load_blocklist(a.easyprivacy, ListName::easyprivacy);
  const auto cmp = compare_runs(run_a, run_b, easylist ? &*easylist : nullptr, easyprivacy ? &*easyprivacy : nullptr);
  write_output(a.out, to_json(cmp).dump(2) + "\n");
}

// -- cookies -----------------------------------------------------------------

struct CookieArgs {
  std::string obs, out;
  double threshold = kDefaultCookieSimilarityThreshold;
  std::optional<std::size_t> visits;
};

void run_cookies(const CookieArgs& a, Context& ctx) {
  const auto observations = take(load_cookies(a.obs, a.visits, ctx.threads), a.obs, ctx);
  std::string out;
  for (const auto& o : observations) out += to_json(o, assess_cookie(o, a.threshold)).dump() + "\n";
  write_output(a.out, out);
}

// -- report ------------------------------------------------------------------

struct ReportArgs {
  std::string verdicts, format = "text", out, psl;
  std::int64_t bucket_size = 1000;
  bool include_uncertain = false;
};

void run_report(const ReportArgs& a, Context& ctx) {
  const Format format = parse_format(a.format);
  const fs::path dir(a.verdicts);
  const auto optional_file = [&](const char* name) {
    const auto p = dir / name;
    return fs::exists(p) ? p.string() : std::string();
  };
  const auto static_path = optional_file("static.jsonl");
  const auto dynamic_path = optional_file("dynamic.jsonl");
  const auto inclusion_path = optional_file("inclusions.jsonl");
  if (static_path.empty() && dynamic_path.empty())
    throw UsageError(a.verdicts + " holds neither static.jsonl nor dynamic.jsonl");

  std::vector<ScriptVerdict> statics;
  std::vector<DynamicVerdict> dynamics;
  std::vector<DetectorInclusion> inclusions;
  if (!static_path.empty()) statics = take(load_static_verdicts(static_path, ctx.threads), static_path, ctx);
  if (!dynamic_path.empty()) dynamics = take(load_dynamic_verdicts(dynamic_path, ctx.threads), dynamic_path, ctx);
  if (!inclusion_path.empty()) inclusions = take(load_inclusions(inclusion_path), inclusion_path, ctx);
  const PublicSuffixRules rules = a.psl.empty() ? PublicSuffixRules{} : load_psl(a.psl);

  const auto reports = aggregate(statics, dynamics, inclusions, {a.include_uncertain});
  const std::vector<Table> tables = {
      sites_table(reports),
      summary_table(reports),
      front_vs_sub_table(frontpage_vs_subpage(reports)),
      buckets_table(bucket_distribution(reports, a.bucket_size)),
      third_party_table(tally_third_party(inclusions)),
      providers_table(provider_tally(inclusions)),
      clusters_table(cluster_by_hash(inclusions)),
      openwpm_rows_table(openwpm_table(statics, dynamics, rules)),
  };
  fs::create_directories(a.out);
  for (const auto& t : tables)
    write_output((fs::path(a.out) / (t.name + "." + std::string(extension(format)))).string(), render(t, format));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"botscope: offline bot-detection analysis of crawl data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("botscope ") + kVersion);
  Context ctx;
  app.add_option("--threads", ctx.threads, "worker threads (default: BOTSCOPE_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  ScanStaticArgs ss;
  auto* scan_static = app.add_subcommand("scan-static", "pattern scan of a script manifest");
  scan_static->add_option("--manifest", ss.manifest, "script manifest (JSONL)")->required()->check(CLI::ExistingFile);
  scan_static->add_option("--patterns", ss.patterns, "pattern config (JSON)")->check(CLI::ExistingFile);
  scan_static->add_flag("--enable-bare-literal", ss.enable_bare, "add the unguarded 'webdriver' pattern");
  scan_static->add_option("--out", ss.out, "verdict output (JSONL); stdout if omitted");

  ScanDynamicArgs sd;
  auto* scan_dyn = app.add_subcommand("scan-dynamic", "classify scripts from call logs");
  scan_dyn->add_option("--log", sd.log, "call log (JSONL)")->required()->check(CLI::ExistingFile);
  scan_dyn->add_option("--static-verdicts,--static", sd.statics, "static verdicts (JSONL)")->check(CLI::ExistingFile);
  scan_dyn->add_option("--honey", sd.honey, "honey property config (JSON)")->check(CLI::ExistingFile);
  scan_dyn->add_option("--surface", sd.extra_symbols, "additional surface symbol");
  scan_dyn->add_option("--out", sd.out, "verdict output (JSONL); stdout if omitted");

  CombineArgs cb;
  auto* comb = app.add_subcommand("combine", "site-level static/dynamic/union counts");
  comb->add_option("--static", cb.statics, "static verdicts (JSONL)")->required()->check(CLI::ExistingFile);
  comb->add_option("--dynamic", cb.dynamics, "dynamic verdicts (JSONL)")->required()->check(CLI::ExistingFile);
  comb->add_option("--out", cb.out, "output (JSON); stdout if omitted");

  FpdiffArgs fd;
  auto* fp = app.add_subcommand("fpdiff", "diff two property templates and classify deviations");
  fp->add_option("--baseline", fd.baseline, "baseline template (JSON)")->required()->check(CLI::ExistingFile);
  fp->add_option("--candidate", fd.candidate, "candidate template (JSON)")->required()->check(CLI::ExistingFile);
  fp->add_option("--kb", fd.kb, "indicator knowledge base (JSON)")->check(CLI::ExistingFile);
  fp->add_option("--out", fd.out, "report (JSON); stdout if omitted");

  AttributeArgs at;
  auto* attr = app.add_subcommand("attribute", "party split and provider attribution of detectors");
  attr->add_option("--static", at.statics, "static verdicts (JSONL)")->check(CLI::ExistingFile);
  attr->add_option("--dynamic", at.dynamics, "dynamic verdicts (JSONL)")->check(CLI::ExistingFile);
  attr->add_option("--psl", at.psl, "Public Suffix List")->required()->check(CLI::ExistingFile);
  attr->add_option("--signatures", at.signatures, "provider signatures (JSON)")->check(CLI::ExistingFile);
  attr->add_flag("--include-uncertain", at.include_uncertain, "also count review-flagged and inconclusive scripts");
  attr->add_option("--out", at.out, "detector inclusions (JSONL); stdout if omitted");
  attr->add_option("--tally", at.tally, "third-party, provider and hash-cluster tallies (JSON)");

  CompareArgs cr;
  auto* cmp = app.add_subcommand("compare-runs", "compare the requests of two crawl runs");
  cmp->add_option("--a", cr.a, "requests of run A (JSONL)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--b", cr.b, "requests of run B (JSONL)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--easylist", cr.easylist, "EasyList filter file")->check(CLI::ExistingFile);
  cmp->add_option("--easyprivacy", cr.easyprivacy, "EasyPrivacy filter file")->check(CLI::ExistingFile);
  cmp->add_option("--out", cr.out, "report (JSON); stdout if omitted");

  CookieArgs ck;
  auto* cookies = app.add_subcommand("cookies", "apply the tracking-cookie criteria");
  cookies->add_option("--obs", ck.obs, "cookie observations (JSONL)")->required()->check(CLI::ExistingFile);
  cookies->add_option("--threshold", ck.threshold, "similarity below which values differ")
      ->check(CLI::Range(0.0, 1.0));
  cookies->add_option("--visits", ck.visits, "expected visits per observation")->check(CLI::PositiveNumber);
  cookies->add_option("--out", ck.out, "assessments (JSONL); stdout if omitted");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "site tables from verdict files");
  report->add_option("--verdicts", rp.verdicts, "directory with static.jsonl, dynamic.jsonl, inclusions.jsonl")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--format", rp.format, "text, csv or json");
  report->add_option("--out", rp.out, "output directory")->required();
  report->add_option("--psl", rp.psl, "Public Suffix List for hosting domains")->check(CLI::ExistingFile);
  report->add_option("--bucket-size", rp.bucket_size, "rank bucket width")->check(CLI::PositiveNumber);
  report->add_flag("--include-uncertain", rp.include_uncertain, "also count review-flagged and inconclusive scripts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*scan_static) run_scan_static(ss, ctx);
    else if (*scan_dyn) run_scan_dynamic(sd, ctx);
    else if (*comb) run_combine(cb, ctx);
    else if (*fp) run_fpdiff(fd, ctx);
    else if (*attr) run_attribute(at, ctx);
    else if (*cmp) run_compare(cr, ctx);
    else if (*cookies) run_cookies(ck, ctx);
    else if (*report) run_report(rp, ctx);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return ctx.validation_failed ? kExitUsage : kExitOk;
}
