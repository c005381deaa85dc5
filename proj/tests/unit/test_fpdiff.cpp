#include <gtest/gtest.h>

#include <random>

#include "botscope/fpdiff.hpp"
#include "support/test_support.hpp"

using namespace botscope;

namespace {

PropertyTemplate load(const std::string& name) {
  const auto t = load_template(test::fixture("templates") / name);
  EXPECT_TRUE(t.ok()) << name;
  return t.tmpl;
}

ValueDescriptor num(int v) { return {ValueKind::number, std::to_string(v)}; }
ValueDescriptor str(std::string v) { return {ValueKind::string, std::move(v)}; }

PropertyTemplate with(std::map<std::string, ValueDescriptor> props) {
  PropertyTemplate t;
  t.properties = std::move(props);
  return t;
}

PropertyTemplate screen(int w, int h, int ww, int wh, int x, int y) {
  return with({{"screen.width", num(w)},
               {"screen.height", num(h)},
               {"window.outerWidth", num(ww)},
               {"window.outerHeight", num(wh)},
               {"window.screenX", num(x)},
               {"window.screenY", num(y)}});
}

std::vector<std::string> ids(const SurfaceReport& r) {
  std::vector<std::string> out;
  for (const auto& m : r.indicators) out.push_back(m.indicator_id);
  return out;
}

SurfaceReport classify(const PropertyTemplate& a, const PropertyTemplate& b, const IndicatorKB& kb = default_kb()) {
  return classify_surface(diff_templates(a, b), a, b, kb);
}

PropertyTemplate random_template(std::mt19937& rng) {
  PropertyTemplate t;
  for (int i = 0; i < 40; ++i)
    if (rng() % 2) t.properties["p" + std::to_string(i)] = num(static_cast<int>(rng() % 3));
  return t;
}

}  // namespace

TEST(Diff, IdenticalIsEmpty) {
  const auto a = load("firefox.json");
  EXPECT_TRUE(diff_templates(a, a).empty());
}

TEST(Diff, WebdriverChange) {
  const auto a = with({{"navigator.webdriver", {ValueKind::boolean, "false"}}});
  const auto b = with({{"navigator.webdriver", {ValueKind::boolean, "true"}}});
  const auto d = diff_templates(a, b);
  ASSERT_EQ(d.changed.size(), 1u);
  EXPECT_EQ(d.changed[0].path, "navigator.webdriver");
  EXPECT_EQ(d.changed[0].a.repr, "false");
  EXPECT_EQ(d.changed[0].b.repr, "true");
  EXPECT_TRUE(d.contains("navigator.webdriver"));
}

TEST(Diff, KindAloneIsAChange) {
  const auto d = diff_templates(with({{"x", num(1)}}), with({{"x", str("1")}}));
  EXPECT_EQ(d.changed.size(), 1u);
}

TEST(Diff, ManyMissingWebglPaths) {
  PropertyTemplate a, b;
  for (int i = 0; i < 2037; ++i) a.properties["webgl.p" + std::to_string(i)] = num(i);
  a.properties["navigator.userAgent"] = str("ua");
  b.properties["navigator.userAgent"] = str("ua");
  const auto d = diff_templates(a, b);
  EXPECT_EQ(d.missing.size(), 2037u);
  EXPECT_TRUE(d.added.empty());
  EXPECT_TRUE(d.changed.empty());
  const auto r = classify_surface(d, a, b, default_kb());
  EXPECT_EQ(ids(r), std::vector<std::string>{"webgl-missing"});
  EXPECT_EQ(r.indicators[0].meaning, Meaning::display_less);
  EXPECT_EQ(r.indicators[0].evidence.size(), 2037u);
  EXPECT_TRUE(r.residual.empty());
}

TEST(Diff, OutputIsSortedAndJsonStable) {
  const auto a = with({{"b", num(1)}, {"a", num(1)}, {"c", num(2)}, {"e", num(1)}});
  const auto b = with({{"c", num(1)}, {"a", num(2)}, {"d", num(1)}});
  const auto d = diff_templates(a, b);
  EXPECT_EQ(d.missing, (std::set<std::string>{"b", "e"}));
  EXPECT_EQ(d.added, (std::set<std::string>{"d"}));
  ASSERT_EQ(d.changed.size(), 2u);
  EXPECT_EQ(d.changed[0].path, "a");
  EXPECT_EQ(d.changed[1].path, "c");
  EXPECT_EQ(to_json(d).dump(), to_json(diff_templates(a, b)).dump());
}

TEST(DiffProperty, AntisymmetryAndDisjointness) {
  std::mt19937 rng(5);
  for (int round = 0; round < 300; ++round) {
    const auto a = random_template(rng);
    const auto b = random_template(rng);
    const auto ab = diff_templates(a, b);
    const auto ba = diff_templates(b, a);
    EXPECT_EQ(ab.missing, ba.added);
    EXPECT_EQ(ab.added, ba.missing);
    ASSERT_EQ(ab.changed.size(), ba.changed.size());
    for (std::size_t i = 0; i < ab.changed.size(); ++i) {
      EXPECT_EQ(ab.changed[i].path, ba.changed[i].path);
      EXPECT_EQ(ab.changed[i].a, ba.changed[i].b);
      EXPECT_EQ(ab.changed[i].b, ba.changed[i].a);
    }
    std::set<std::string> seen;
    for (const auto& p : ab.missing) EXPECT_TRUE(seen.insert(p).second);
    for (const auto& p : ab.added) EXPECT_TRUE(seen.insert(p).second);
    for (const auto& c : ab.changed) EXPECT_TRUE(seen.insert(c.path).second);
    EXPECT_TRUE(diff_templates(a, a).empty());
  }
}

TEST(DiffProperty, TriangleOnPaths) {
  std::mt19937 rng(6);
  for (int round = 0; round < 300; ++round) {
    const auto a = random_template(rng);
    const auto b = random_template(rng);
    const auto c = random_template(rng);
    const auto ab = diff_templates(a, b);
    const auto bc = diff_templates(b, c);
    const auto ac = diff_templates(a, c);
    std::vector<std::string> paths(ac.missing.begin(), ac.missing.end());
    paths.insert(paths.end(), ac.added.begin(), ac.added.end());
    for (const auto& ch : ac.changed) paths.push_back(ch.path);
    for (const auto& p : paths) EXPECT_TRUE(ab.contains(p) || bc.contains(p)) << p;
  }
}

TEST(Glob, StarOnly) {
  EXPECT_TRUE(glob_match("webgl.*", "webgl.vendor"));
  EXPECT_FALSE(glob_match("webgl.*", "xwebgl.vendor"));
  EXPECT_TRUE(glob_match("*getInstrumentJS", "window.getInstrumentJS"));
  EXPECT_TRUE(glob_match("*", ""));
  EXPECT_TRUE(glob_match("a*b*c", "aXXbYYc"));
  EXPECT_FALSE(glob_match("a*b*c", "aXXbYY"));
  EXPECT_FALSE(glob_match("a?c", "abc"));
}

TEST(Classify, DisplayLessFromAvailOrigin) {
  const auto a = with({{"screen.availTop", num(27)}, {"screen.availLeft", num(72)}});
  const auto b = with({{"screen.availTop", num(0)}, {"screen.availLeft", num(0)}});
  const auto r = classify(a, b);
  EXPECT_EQ(ids(r), std::vector<std::string>{"avail-origin-zero"});
  EXPECT_EQ(r.indicators[0].evidence, (std::vector<std::string>{"screen.availLeft", "screen.availTop"}));
  const auto half = classify(a, with({{"screen.availTop", num(0)}, {"screen.availLeft", num(72)}}));
  EXPECT_TRUE(half.indicators.empty());
}

TEST(Classify, VirtualisationFromVendor) {
  const auto r = classify({}, with({{"webgl.vendor", str("VMware, Inc. llvmpipe (LLVM 10.0.0, 256 bits)")}}));
  ASSERT_EQ(ids(r), std::vector<std::string>{"webgl-vmware"});
  EXPECT_EQ(r.indicators[0].meaning, Meaning::virtualisation);
}

TEST(Classify, InstrumentedToString) {
  const auto a = with({{"CanvasRenderingContext2D.prototype.getContext",
                        {ValueKind::function, "function getContext() {\n    [native code]\n}"}}});
  const auto b = with({{"CanvasRenderingContext2D.prototype.getContext",
                        {ValueKind::function, "function(){ return instrumentFunction(arguments); }"}}});
  const auto r = classify(a, b);
  ASSERT_EQ(ids(r), std::vector<std::string>{"non-native-function"});
  EXPECT_EQ(r.indicators[0].meaning, Meaning::instrumentation);
  EXPECT_TRUE(classify(a, a).indicators.empty());
}

TEST(Classify, DockerSignatureNeedsBothConditions) {
  const auto b = with({{"fonts.Bitstream Vera Sans Mono", {ValueKind::boolean, "true"}}, {"timezone.offset", num(0)}});
  const auto r = classify({}, b);
  ASSERT_EQ(ids(r), std::vector<std::string>{"docker-fonts-timezone"});
  EXPECT_EQ(r.run_mode_guess, RunMode::docker);
  auto two_fonts = b;
  two_fonts.properties["fonts.Arial"] = {ValueKind::boolean, "true"};
  EXPECT_TRUE(classify({}, two_fonts).indicators.empty());
  auto other_tz = b;
  other_tz.properties["timezone.offset"] = num(-120);
  EXPECT_TRUE(classify({}, other_tz).indicators.empty());
}

struct FixtureCase {
  std::string file;
  std::vector<std::string> indicators;
  Os os;
  RunMode mode;
  bool polluted;
};

class FixtureTemplates : public ::testing::TestWithParam<FixtureCase> {};

TEST_P(FixtureTemplates, ClassifiedAgainstFirefox) {
  const auto& c = GetParam();
  const auto base = load("firefox.json");
  const auto cand = load(c.file);
  const auto r = classify(base, cand);
  EXPECT_EQ(ids(r), c.indicators);
  EXPECT_EQ(r.screen.os, c.os);
  EXPECT_EQ(r.screen.mode, c.mode);
  EXPECT_EQ(r.run_mode_guess, c.mode);
  EXPECT_EQ(r.prototype_pollution.polluted, c.polluted);
  EXPECT_FALSE(r.prototype_pollution.insufficient_data);
}

INSTANTIATE_TEST_SUITE_P(
    Templates, FixtureTemplates,
    ::testing::Values(
        FixtureCase{"firefox.json", {}, Os::ubuntu, RunMode::regular, false},
        FixtureCase{"wpm_regular.json",
                    {"webdriver-flag", "instrument-getInstrumentJS", "instrument-jsInstruments", "non-native-function"},
                    Os::ubuntu,
                    RunMode::regular,
                    true},
        FixtureCase{"wpm_headless.json", {"webdriver-flag", "avail-origin-zero"}, Os::ubuntu, RunMode::headless, false},
        FixtureCase{"wpm_xvfb.json", {"webdriver-flag", "avail-origin-zero"}, Os::ubuntu, RunMode::xvfb, false},
        FixtureCase{"wpm_docker.json",
                    {"webdriver-flag", "webgl-vmware", "docker-fonts-timezone"},
                    Os::ubuntu,
                    RunMode::docker,
                    false}));

TEST(Classify, NeverInventsEvidence) {
  const auto base = load("firefox.json");
  for (const auto* f : {"wpm_regular.json", "wpm_headless.json", "wpm_xvfb.json", "wpm_docker.json"}) {
    const auto cand = load(f);
    const auto d = diff_templates(base, cand);
    const auto r = classify_surface(d, base, cand, default_kb());
    for (const auto& m : r.indicators) {
      EXPECT_FALSE(m.evidence.empty()) << m.indicator_id;
      for (const auto& p : m.evidence) EXPECT_TRUE(d.contains(p) || cand.find(p)) << f << ": " << p;
    }
    // residual only holds uncited diff entries
    EXPECT_LE(r.residual.size(), d.size());
    for (const auto& p : r.residual.missing) EXPECT_TRUE(d.missing.contains(p));
  }
}

TEST(ClassifyProperty, EvidenceExistsOnRandomTemplates) {
  std::mt19937 rng(9);
  const std::vector<std::string> paths = {"navigator.webdriver", "screen.availTop", "screen.availLeft", "webgl.vendor",
                                          "fonts.A", "timezone.offset", "window.getInstrumentJS", "x.toString"};
  const std::vector<ValueDescriptor> values = {{ValueKind::boolean, "true"}, num(0), str("VMware, Inc."),
                                               {ValueKind::function, "function f() {}"}, num(1)};
  for (int round = 0; round < 500; ++round) {
    PropertyTemplate a, b;
    for (const auto& p : paths) {
      if (rng() % 2) a.properties[p] = values[rng() % values.size()];
      if (rng() % 2) b.properties[p] = values[rng() % values.size()];
    }
    const auto d = diff_templates(a, b);
    const auto r = classify_surface(d, a, b, default_kb());
    for (const auto& m : r.indicators)
      for (const auto& p : m.evidence) EXPECT_TRUE(d.contains(p) || b.find(p)) << p;
  }
}

TEST(Screen, ProfileExamples) {
  auto ubuntu = screen(2560, 1440, 1366, 683, 80, 35);
  ubuntu.properties["window.offsetX"] = num(8);
  ubuntu.properties["window.offsetY"] = num(8);
  auto m = match_screen_profile(ubuntu);
  EXPECT_EQ(m.os, Os::ubuntu);
  EXPECT_EQ(m.mode, RunMode::regular);

  m = match_screen_profile(screen(1366, 768, 1366, 683, 4, 4));
  EXPECT_EQ(m.os, Os::macos);
  EXPECT_EQ(m.mode, RunMode::headless);

  m = match_screen_profile(screen(1920, 1080, 1200, 800, 10, 10));
  EXPECT_FALSE(m.matched());
  EXPECT_EQ(m.mode, RunMode::unknown);
}

TEST(Screen, OffsetMustAgreeWhenPresent) {
  auto t = screen(2560, 1440, 1366, 683, 80, 35);
  t.properties["window.offsetX"] = num(0);
  t.properties["window.offsetY"] = num(0);
  EXPECT_FALSE(match_screen_profile(t).matched());
}

TEST(Screen, SharedGeometryResolvedByWebgl) {
  const auto geometry = screen(1366, 768, 1366, 683, 0, 0);
  EXPECT_EQ(match_screen_profile(geometry).mode, RunMode::headless);
  auto null_vendor = geometry;
  null_vendor.properties["webgl.vendor"] = {ValueKind::null, ""};
  EXPECT_EQ(match_screen_profile(null_vendor).mode, RunMode::headless);
  auto mesa = geometry;
  mesa.properties["webgl.vendor"] = str("Mesa/X.org");
  EXPECT_EQ(match_screen_profile(mesa).mode, RunMode::xvfb);
  auto gpu = geometry;
  gpu.properties["webgl.vendor"] = str("AMD");
  EXPECT_FALSE(match_screen_profile(gpu).matched());
}

TEST(Screen, MissingPathIsUnknown) {
  auto t = screen(2560, 1440, 1366, 683, 0, 0);
  t.properties.erase("window.screenY");
  EXPECT_FALSE(match_screen_profile(t).matched());
}

TEST(Pollution, Cases) {
  const auto polluted = with({{"CanvasRenderingContext2D.prototype.hasOwnProperty", {ValueKind::function, "f"}},
                              {"Object.prototype.hasOwnProperty", {ValueKind::function, "f"}}});
  auto r = detect_prototype_pollution(polluted);
  EXPECT_TRUE(r.polluted);
  EXPECT_EQ(r.evidence, std::vector<std::string>{"CanvasRenderingContext2D.prototype.hasOwnProperty"});

  const auto clean = with({{"CanvasRenderingContext2D.prototype.fillText", {ValueKind::function, "f"}},
                           {"Object.prototype.hasOwnProperty", {ValueKind::function, "f"}}});
  r = detect_prototype_pollution(clean);
  EXPECT_FALSE(r.polluted);
  EXPECT_FALSE(r.insufficient_data);

  r = detect_prototype_pollution(with({{"navigator.webdriver", {ValueKind::boolean, "true"}}}));
  EXPECT_FALSE(r.polluted);
  EXPECT_TRUE(r.insufficient_data);
  SurfaceReport report;
  report.prototype_pollution = r;
  EXPECT_EQ(to_json(report).at("prototype_pollution").at("note"), "insufficient data");
}

TEST(KB, ShippedFileMatchesDefaults) {
  const auto kb = kb_from_json(std::string_view(test::slurp(test::data_file("kb.json"))));
  EXPECT_EQ(to_json(kb), to_json(default_kb()));
}

TEST(KB, FlatEntriesAndRoundTrip) {
  const auto kb = kb_from_json(std::string_view(
      R"([{"indicator_id":"x","path_pattern":"navigator.webdriver","predicate":{"equals":"true"},"meaning":"automation"},
          {"indicator_id":"y","path_pattern":"fonts.*","predicate":{"count_eq":1},"meaning":"mode_signature"}])"));
  ASSERT_EQ(kb.entries().size(), 2u);
  EXPECT_EQ(kb.entries()[1].all[0].predicate.count_eq, 1u);
  EXPECT_EQ(to_json(kb_from_json(to_json(kb))), to_json(kb));
}

TEST(KB, RejectsBadDocuments) {
  const auto bad = [](const char* text) { return [text] { kb_from_json(std::string_view(text)); }; };
  EXPECT_THROW(bad("{")(), ConfigError);
  EXPECT_THROW(bad("{}")(), ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","path_pattern":"a","meaning":"nope"}])")(), ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","meaning":"automation"}])")(), ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","path_pattern":"a","meaning":"automation"},
                       {"indicator_id":"x","path_pattern":"b","meaning":"automation"}])")(),
               ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","path_pattern":"a","meaning":"automation","predicate":{"count_eq":0}}])")(),
               ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","path_pattern":"a","meaning":"automation","predicate":{"regex":"."}}])")(),
               ConfigError);
  EXPECT_THROW(bad(R"([{"indicator_id":"x","path_pattern":"a","meaning":"automation","scope":"everywhere"}])")(),
               ConfigError);
}

TEST(KB, ScopeRestrictsCandidates) {
  const auto kb = kb_from_json(std::string_view(
      R"([{"indicator_id":"added-ua","path_pattern":"navigator.*","scope":"added","meaning":"automation"}])"));
  const auto a = with({{"navigator.userAgent", str("x")}});
  const auto b = with({{"navigator.userAgent", str("y")}, {"navigator.extra", str("z")}});
  const auto r = classify(a, b, kb);
  ASSERT_EQ(r.indicators.size(), 1u);
  EXPECT_EQ(r.indicators[0].evidence, std::vector<std::string>{"navigator.extra"});
  ASSERT_EQ(r.residual.changed.size(), 1u);
  EXPECT_EQ(r.residual.changed[0].path, "navigator.userAgent");
}

TEST(Report, JsonShape) {
  const auto r = classify(load("firefox.json"), load("wpm_headless.json"));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("run_mode_guess"), "headless");
  EXPECT_EQ(j.at("screen_profile").at("os"), "ubuntu");
  EXPECT_EQ(j.at("indicators").size(), 2u);
  EXPECT_TRUE(j.at("residual").contains("missing"));
}
