#include "sfl/model_spec.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace sfl {

namespace {

struct Token {
  enum class Kind { Conv, Pool, Residual, Fc, Split } kind;
  std::size_t width = 0;  // 0 for FC means num_classes
};

std::vector<Token> tokenize(const std::string& layout) {
  std::vector<Token> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    auto number = [&](std::size_t prefix) -> std::size_t {
      const std::string digits = cur.substr(prefix);
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ConfigError("layer string: bad token '" + cur + "' in '" + layout + "'");
      }
      const std::size_t n = std::stoul(digits);
      if (n == 0) throw ConfigError("layer string: zero width in '" + cur + "'");
      return n;
    };
    if (cur == "MP") {
      tokens.push_back({Token::Kind::Pool});
    } else if (cur == "FC") {
      tokens.push_back({Token::Kind::Fc, 0});
    } else if (cur.rfind("FC", 0) == 0) {
      tokens.push_back({Token::Kind::Fc, number(2)});
    } else if (cur.rfind("RB", 0) == 0) {
      tokens.push_back({Token::Kind::Residual, number(2)});
    } else if (cur.rfind("C", 0) == 0) {
      tokens.push_back({Token::Kind::Conv, number(1)});
    } else {
      throw ConfigError("layer string: unknown token '" + cur + "' in '" + layout + "'");
    }
    cur.clear();
  };
  for (char ch : layout) {
    if (ch == '-' || ch == ' ') {
      flush();
    } else if (ch == '|') {
      flush();
      tokens.push_back({Token::Kind::Split});
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  if (std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.kind == Token::Kind::Split; }) > 1) {
    throw ConfigError("layer string: more than one '|' in '" + layout + "'");
  }
  return tokens;
}

template <typename T>
LayerStack<T> expand(const ModelSpec& spec, std::size_t* split_index) {
  const auto tokens = tokenize(spec.layout);
  std::size_t last_layer_token = tokens.size();
  for (std::size_t i = tokens.size(); i-- > 0;) {
    if (tokens[i].kind != Token::Kind::Split) {
      last_layer_token = i;
      break;
    }
  }
  if (last_layer_token == tokens.size()) throw ConfigError("layer string '" + spec.layout + "' has no layers");

  LayerStack<T> layers;
  Shape shape = spec.input_shape;
  auto push = [&](Layer<T> l) {
    try {
      shape = output_shape(l, shape);
    } catch (const ShapeError& e) {
      throw ShapeError(spec.name + ": boundary " + std::to_string(layers.size()) + ": " + e.what());
    }
    layers.push_back(std::move(l));
  };
  if (split_index) *split_index = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    const bool last = i == last_layer_token;
    switch (t.kind) {
      case Token::Kind::Split:
        if (split_index) *split_index = layers.size();
        break;
      case Token::Kind::Conv:
        push(Layer<T>::conv3x3(shape.empty() ? 0 : shape[0], t.width));
        push(Layer<T>::relu());
        break;
      case Token::Kind::Pool:
        push(Layer<T>::max_pool());
        break;
      case Token::Kind::Residual:
        push(Layer<T>::residual(shape.empty() ? 0 : shape[0], t.width));
        break;
      case Token::Kind::Fc: {
        if (shape.size() != 1) push(Layer<T>::flatten());
        const std::size_t out = t.width ? t.width : spec.num_classes;
        push(Layer<T>::dense(shape[0], out));
        if (!last) push(Layer<T>::relu());
        break;
      }
    }
  }
  if (shape != Shape{spec.num_classes}) {
    throw ShapeError(spec.name + ": output shape " + to_string(shape) + " does not match " +
                     std::to_string(spec.num_classes) + " classes");
  }
  return layers;
}

}  // namespace

ModelSpec builtin_spec(const std::string& name) {
  if (name == "tinyvgg") return {"tinyvgg", "C8-MP-C16-MP|C32-MP-FC", 2, {3, 16, 16}};
  if (name == "tinyres") return {"tinyres", "C8-MP-C16-MP|RB32-FC", 2, {3, 16, 16}};
  if (name == "vgg11") {
    return {"vgg11", "C64-MP-C128-MP|C256-C256-MP-C512-C512-MP-C512-C512-FC4096-FC4096-FC", 10, {3, 32, 32}};
  }
  if (name == "resnet9") return {"resnet9", "C64-MP-C128-MP|RB256-RB512-RB512-FC", 10, {3, 32, 32}};
  throw ConfigError("unknown model '" + name + "'");
}

std::vector<std::string> builtin_spec_names() { return {"tinyvgg", "tinyres", "vgg11", "resnet9"}; }

ModelSpec resolve_spec(const std::string& name_or_layout, std::size_t num_classes, const Shape& input_shape) {
  ModelSpec spec;
  if (name_or_layout.find_first_of("-|") != std::string::npos) {
    spec.name = "custom";
    spec.layout = name_or_layout;
  } else {
    spec = builtin_spec(name_or_layout);
  }
  spec.num_classes = num_classes;
  spec.input_shape = input_shape;
  return spec;
}

std::uint64_t spec_digest(const ModelSpec& spec) {
  std::ostringstream os;
  os << spec.layout << '#' << spec.num_classes << '#' << to_string(spec.input_shape);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

PartitionPoint default_partition(const ModelSpec& spec) {
  std::size_t split = 0;
  expand<float>(spec, &split);
  return {split};
}

template <typename T>
LayerStack<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  LayerStack<T> layers = expand<T>(spec, nullptr);
  init_uniform(layers, seed);
  return layers;
}

template <typename T>
LayerStack<T> build_model_uninitialized(const ModelSpec& spec) {
  return expand<T>(spec, nullptr);
}

template LayerStack<float> build_model<float>(const ModelSpec&, std::uint64_t);
template LayerStack<double> build_model<double>(const ModelSpec&, std::uint64_t);
template LayerStack<float> build_model_uninitialized<float>(const ModelSpec&);
template LayerStack<double> build_model_uninitialized<double>(const ModelSpec&);

}  // namespace sfl
