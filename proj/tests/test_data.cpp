#include <doctest.h>

#include <sstream>

#include "boxgnn/data.hpp"
#include "properties.hpp"

using namespace boxgnn;

namespace {

std::vector<RawRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_hetrec(in);
}

std::vector<RawRecord> with_tag_counts(std::initializer_list<std::pair<std::string, int>> counts) {
  std::vector<RawRecord> out;
  int n = 0;
  for (const auto& [tag, c] : counts) {
    for (int k = 0; k < c; ++k, ++n) out.push_back({std::to_string(n % 3), std::to_string(100 + n), tag});
  }
  return out;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parsing HetRec files") {
  SUBCASE("header and two rows") {
    const auto r = parse("userID\tmovieID\ttagID\tdate_day\tdate_month\n75\t353\t5290\t1\t2\n75\t353\t5291\t1\t2\n");
    REQUIRE(r.size() == 2);
    CHECK(r[0].user == "75");
    CHECK(r[0].item == "353");
    CHECK(r[1].tag == "5291");
  }
  SUBCASE("LastFm column names and CRLF endings") {
    const auto r = parse("userID\tartistID\ttagID\ttimestamp\r\n2\t52\t13\t1238536800000\r\n\r\n");
    REQUIRE(r.size() == 1);
    CHECK(r[0].tag == "13");
  }
  SUBCASE("non-numeric tag column cites the line") {
    try {
      parse("userID\tmovieID\ttagID\n1\t2\t3\n1\t2\tx\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("duplicated rows are kept") { CHECK(parse("userID\titemID\ttagID\n1\t2\t3\n1\t2\t3\n").size() == 2); }
  SUBCASE("malformed header") {
    CHECK_THROWS_AS(parse("user\tmovie\n"), FormatError);
    CHECK_THROWS_AS(parse(""), FormatError);
  }
  SUBCASE("missing file") {
    try {
      load_hetrec("/nonexistent/user_taggedmovies.dat");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/user_taggedmovies.dat") != std::string::npos);
    }
  }
}

TEST_CASE("tag filtering") {
  SUBCASE("threshold removes rare tags") {
    const auto out = filter_tags(with_tag_counts({{"t1", 6}, {"t2", 4}}), 5);
    CHECK(out.size() == 6);
    for (const auto& r : out) CHECK(r.tag == "t1");
  }
  SUBCASE("min count one keeps everything") {
    const auto in = with_tag_counts({{"a", 1}, {"b", 2}});
    const auto out = filter_tags(in, 1);
    REQUIRE(out.size() == in.size());
    for (std::size_t k = 0; k < in.size(); ++k) CHECK(out[k].tag == in[k].tag);
  }
  SUBCASE("exactly five uses survive") { CHECK(filter_tags(with_tag_counts({{"t", 5}}), 5).size() == 5); }
  SUBCASE("a single pass, no cascade") {
    // Dropping tag b leaves item 7 with one record; nothing else is removed.
    std::vector<RawRecord> in{{"1", "7", "a"}, {"1", "7", "b"}, {"2", "8", "a"}};
    CHECK(filter_tags(in, 2).size() == 2);
  }
  SUBCASE("zero min count is rejected") { CHECK_THROWS_AS(filter_tags({}, 0), std::invalid_argument); }
}

TEST_CASE("splitting") {
  std::vector<RawRecord> ten;
  for (int k = 0; k < 10; ++k) ten.push_back({std::to_string(k % 3), std::to_string(k), std::to_string(k % 2)});
  SUBCASE("ten records split 8/1/1") {
    const auto ds = split_dataset(ten, {}, 1);
    CHECK(ds.train.size() == 8);
    CHECK(ds.validation.size() == 1);
    CHECK(ds.test.size() == 1);
  }
  SUBCASE("seed determinism and sensitivity") {
    const auto a = split_dataset(ten, {}, 5), b = split_dataset(ten, {}, 5);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    int differ = 0;
    for (std::uint64_t s = 6; s < 16; ++s) differ += split_dataset(ten, {}, s).train != a.train;
    CHECK(differ >= 8);
  }
  SUBCASE("vocabulary in first-appearance order") {
    const std::vector<RawRecord> r{{"9", "50", "3"}, {"4", "50", "1"}, {"9", "20", "3"}};
    const auto ds = split_dataset(r, {}, 1);
    CHECK(ds.users.ids() == std::vector<std::string>{"9", "4"});
    CHECK(ds.items.ids() == std::vector<std::string>{"50", "20"});
    CHECK(ds.tags.find("1").value() == 1);
    CHECK_FALSE(ds.tags.find("2").has_value());
  }
  SUBCASE("training positives come from the train slice only") {
    const auto ds = split_dataset(ten, {}, 2);
    std::size_t pairs = 0;
    for (std::uint32_t u = 0; u < ds.users.size(); ++u) pairs += ds.train_positives.items_of(u).size();
    CHECK(pairs == 8);  // every item id is distinct
  }
  SUBCASE("too few records or bad ratios") {
    CHECK_THROWS_AS(split_dataset(std::vector<RawRecord>(ten.begin(), ten.begin() + 2), {}, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(ten, {0.5, 0.1, 0.1}, 1), std::invalid_argument);
  }
}

TEST_CASE("manifest round trip and hash guard") {
  std::mt19937_64 rng(3);
  const auto ds = split_dataset(testing::random_records(rng, 80), {}, 4);
  const auto dir = std::filesystem::temp_directory_path() / "boxgnn_manifest_test";
  std::filesystem::create_directories(dir);
  save_manifest(dir / "m.json", ds, {{"note", "test"}});
  const auto back = load_manifest(dir / "m.json");
  CHECK(back.users.ids() == ds.users.ids());
  CHECK(back.tags.ids() == ds.tags.ids());
  CHECK(back.train == ds.train);
  CHECK(back.validation == ds.validation);
  CHECK(back.test == ds.test);
  CHECK(back.vocab_hash() == ds.vocab_hash());
  CHECK(vocabulary_hash(ds.users, ds.items, ds.tags).size() == 16);

  std::ifstream in(dir / "m.json");
  auto j = nlohmann::json::parse(in);
  j["vocabulary"]["users"][0] = "tampered";
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "none.json"), IoError);
}

TEST_CASE("split names") {
  CHECK(parse_split("validation") == Split::kValidation);
  CHECK(parse_split("test") == Split::kTest);
  CHECK(split_name(Split::kTrain) == "train");
  CHECK_THROWS_AS(parse_split("dev"), std::invalid_argument);
}

TEST_CASE("data properties (reduced size)") {
  const auto r = testing::prop_split_partition(200, 51);
  INFO(r.first_failure);
  CHECK(r.ok());
}

}  // TEST_SUITE
