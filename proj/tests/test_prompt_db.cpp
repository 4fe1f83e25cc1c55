// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "promptdb/snapshot.hpp"
#include "promptdb/store.hpp"
#include "test_util.hpp"

using namespace promptdb;

namespace {

const Dims kDims{4, 3, 2};

std::string valid_line(const std::string& id = "a01", bool inline_vecs = true) {
  std::string line = R"({"id":")" + id + R"(","language":"en","duration_s":3.5,)"
                     R"("transcript":"hello","description":"a calm low voice",)"
                     R"("gender":"female","age_years":30,"age_group":"young_adult",)"
                     R"("emotion":"calm","speaking_rate":4.1,"pitch_mean_hz":180.0,)"
                     R"("quality":4.0)";
  if (inline_vecs) {
    line += R"(,"speaker_vec":[1.0,0.0,0.0,0.0],"emotion_vec":[0.0,1.0,0.0],)"
            R"("face_vec":[0.6,0.8])";
  }
  line += "}";
  return line;
}

}  // namespace

TEST_CASE("parse_record accepts a fully populated line") {
  const PromptRecord r = parse_record(valid_line(), kDims);
  CHECK(r.id == "a01");
  CHECK(r.language == "en");
  CHECK(r.gender == Gender::female);
  CHECK(r.age_group == AgeGroup::young_adult);
  CHECK(r.speaker_vec.size() == 4);
  CHECK(std::abs(r.speaker_vec.cast<double>().norm() - 1.0) < 1e-6);
  CHECK(r.face_vec.has_value());
  // desc_vec derived from the description when absent from the line.
  CHECK(r.desc_vec.count("calm") == 1);
}

TEST_CASE("parse_record renormalizes near-unit vectors and rejects the rest") {
  std::string near = valid_line();
  near.replace(near.find("[1.0,0.0,0.0,0.0]"), 17, "[1.5,0.0,0.0,0.0]");
  const PromptRecord r = parse_record(near, kDims);
  CHECK(std::abs(r.speaker_vec.cast<double>().norm() - 1.0) < 1e-6);
  CHECK(r.speaker_vec[0] == doctest::Approx(1.0f));

  std::string far = valid_line();
  far.replace(far.find("[1.0,0.0,0.0,0.0]"), 17, "[3.0,0.0,0.0,0.0]");
  try {
    parse_record(far, kDims);
    FAIL("expected NormOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NormOutOfRange);
  }
}

TEST_CASE("parse_record rejects a wrong-dimension speaker vector") {
  std::string bad = valid_line();
  bad.replace(bad.find("[1.0,0.0,0.0,0.0]"), 17, "[1.0,0.0,0.0]");
  try {
    parse_record(bad, kDims);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("parse_record rejects an age_group inconsistent with age_years") {
  std::string bad = valid_line();
  bad.replace(bad.find("young_adult"), 11, "elderly");
  CHECK_THROWS_AS(parse_record(bad, kDims), Error);
}

TEST_CASE("parse_record typed errors") {
  try {
    parse_record(R"({"language":"en"})", kDims);
    FAIL("expected MissingField");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingField);
  }

  std::string bad_lang = valid_line();
  bad_lang.replace(bad_lang.find("\"en\""), 4, "\"EN\"");
  try {
    parse_record(bad_lang, kDims);
    FAIL("expected BadLanguageCode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadLanguageCode);
  }

  std::string own_lang = valid_line();
  own_lang.insert(own_lang.rfind('}'), R"(,"candidate_for":["en","it"])");
  CHECK_THROWS_AS(parse_record(own_lang, kDims), Error);
}

TEST_CASE("parse_record is total over mutated lines") {
  // Every malformed line must raise a typed Error, never crash or return a
  // half-validated record.
  std::mt19937_64 rng(2024);
  const std::string base = valid_line();
  int parsed = 0, rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string line = base;
    const int op = static_cast<int>(rng() % 4);
    if (op == 0 && !line.empty()) {
      line.erase(rng() % line.size(), 1 + rng() % 5);
    } else if (op == 1) {
      line[rng() % line.size()] = static_cast<char>('!' + rng() % 90);
    } else if (op == 2) {
      line.insert(rng() % line.size(), "\"");
    } else {
      line = line.substr(0, rng() % line.size());
    }
    try {
      (void)parse_record(line, kDims);
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    }
  }
  CHECK(rejected > 0);
  CHECK(parsed + rejected == 3000);
}

TEST_CASE("build_snapshot sorts by id and rejects duplicates") {
  std::mt19937_64 rng(5);
  std::vector<PromptRecord> records;
  records.push_back(testutil::make_record(rng, "charlie"));
  records.push_back(testutil::make_record(rng, "alpha"));
  records.push_back(testutil::make_record(rng, "bravo"));
  const DatabaseSnapshot snap = build_snapshot(records);
  CHECK(snap.size() == 3);
  CHECK(snap.records[0].id == "alpha");
  CHECK(snap.records[2].id == "charlie");

  records.push_back(testutil::make_record(rng, "alpha"));
  try {
    build_snapshot(records);
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateId);
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }

  CHECK_THROWS_AS(build_snapshot({}), Error);
}

TEST_CASE("build_snapshot: 1000 records, every id resolvable") {
  const DatabaseSnapshot snap = testutil::small_snapshot(77, 1000);
  CHECK(snap.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto idx = snap.index_of(testutil::padded_id(i));
    REQUIRE(idx.has_value());
    CHECK(snap.records[*idx].id == testutil::padded_id(i));
  }
  CHECK_FALSE(snap.index_of("nonexistent").has_value());
}

TEST_CASE("build_snapshot is order independent") {
  std::mt19937_64 rng(6);
  std::vector<PromptRecord> records;
  for (int i = 0; i < 40; ++i) {
    records.push_back(testutil::make_record(rng, testutil::padded_id(i)));
  }
  const DatabaseSnapshot a = build_snapshot(records);
  for (int perm = 0; perm < 5; ++perm) {
    std::shuffle(records.begin(), records.end(), rng);
    CHECK(snapshots_equal(a, build_snapshot(records)));
  }
}

TEST_CASE("save/open round trip is field-identical") {
  const auto dir = testutil::temp_dir("store");
  const DatabaseSnapshot snap = testutil::small_snapshot(99, 100, 8, 4, true, 4);
  const std::string manifest = (dir / "m.jsonl").string();
  const std::string vectors = (dir / "v.bin").string();
  save_store(snap, manifest, vectors);
  const DatabaseSnapshot reopened = open_store(manifest, vectors);
  CHECK(snapshots_equal(snap, reopened));

  // A second round trip is bit-identical at the file level too.
  const std::string manifest2 = (dir / "m2.jsonl").string();
  const std::string vectors2 = (dir / "v2.bin").string();
  save_store(reopened, manifest2, vectors2);
  const auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp(manifest) == slurp(manifest2));
  CHECK(slurp(vectors) == slurp(vectors2));
  std::filesystem::remove_all(dir);
}

TEST_CASE("open_store detects truncation and header mismatches") {
  const auto dir = testutil::temp_dir("store_errs");
  const DatabaseSnapshot snap = testutil::small_snapshot(100, 10);
  const std::string manifest = (dir / "m.jsonl").string();
  const std::string vectors = (dir / "v.bin").string();
  save_store(snap, manifest, vectors);

  // Truncate the vector file by one byte.
  {
    std::ifstream in(vectors, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(vectors + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 1));
  }
  try {
    open_store(manifest, vectors + ".trunc");
    FAIL("expected TruncatedStore");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedStore);
  }

  // Drop one manifest line: counts disagree with the header.
  {
    std::ifstream in(manifest);
    std::ofstream out(manifest + ".short");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      if (++n == 10) break;
      out << line << '\n';
    }
  }
  try {
    open_store(manifest + ".short", vectors);
    FAIL("expected HeaderMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HeaderMismatch);
  }

  // Corrupt the magic.
  {
    std::ifstream in(vectors, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[0] = 'X';
    std::ofstream out(vectors + ".magic", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    open_store(manifest, vectors + ".magic");
    FAIL("expected HeaderMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HeaderMismatch);
  }

  CHECK_THROWS_AS(open_store((dir / "missing.jsonl").string(), vectors), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ingest_inline_manifest builds from inline vectors") {
  const auto dir = testutil::temp_dir("inline");
  const std::string path = (dir / "inline.jsonl").string();
  {
    std::ofstream out(path);
    out << valid_line("b02") << '\n' << valid_line("a01") << '\n';
  }
  const DatabaseSnapshot snap = ingest_inline_manifest(path);
  CHECK(snap.size() == 2);
  CHECK(snap.records[0].id == "a01");
  CHECK(snap.dims == Dims{4, 3, 2});
  std::filesystem::remove_all(dir);
}

TEST_CASE("snapshot terciles cover the stored distributions") {
  const DatabaseSnapshot snap = testutil::small_snapshot(3, 30);
  REQUIRE(snap.rate_cuts.has_value());
  REQUIRE(snap.pitch_cuts.has_value());
  int bands[3] = {0, 0, 0};
  for (const auto& r : snap.records) {
    bands[tercile_band(*r.speaking_rate, *snap.rate_cuts)]++;
  }
  CHECK(bands[0] > 0);
  CHECK(bands[1] > 0);
  CHECK(bands[2] > 0);
}
