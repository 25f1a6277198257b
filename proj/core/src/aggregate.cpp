#include "dial2vec/aggregate.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dial2vec {

std::string to_string(PoolStrategy strategy) {
  switch (strategy) {
    case PoolStrategy::Average: return "average";
    case PoolStrategy::Interlocutor: return "interlocutor";
    case PoolStrategy::P1Only: return "p1";
    case PoolStrategy::P2Only: return "p2";
  }
  throw std::logic_error("unknown pool strategy");
}

PoolStrategy pool_strategy_from_string(const std::string& name) {
  if (name == "average") return PoolStrategy::Average;
  if (name == "interlocutor") return PoolStrategy::Interlocutor;
  if (name == "p1") return PoolStrategy::P1Only;
  if (name == "p2") return PoolStrategy::P2Only;
  throw std::invalid_argument("unknown pooling strategy: " + name);
}

Eigen::VectorXd average_pool(const ag::Matrix& encoder_output) {
  if (encoder_output.rows() < 1) {
    throw std::invalid_argument("average_pool: empty input");
  }
  return encoder_output.colwise().mean().transpose();
}

Eigen::VectorXd interlocutor_mean(const ag::Matrix& encoder_output,
                                  const Eigen::VectorXd& mask) {
  if (mask.size() != encoder_output.rows()) {
    throw std::invalid_argument("interlocutor_mean: mask length mismatch");
  }
  const double count = mask.sum();
  if (count == 0.0) {
    throw std::invalid_argument("interlocutor_mean: empty mask");
  }
  return (encoder_output.transpose() * mask) / count;
}

Eigen::VectorXd interlocutor_pool(const ag::Matrix& encoder_output,
                                  const MaskPair& masks) {
  return interlocutor_mean(encoder_output, masks.p1) +
         interlocutor_mean(encoder_output, masks.p2);
}

DialogueEmbedding embed_dialogue(const EmbeddingModel& model,
                                 const Dialogue& dialogue, PoolStrategy strategy) {
  const TokenizedDialogue tok =
      tokenize_dialogue(dialogue, model.vocab, model.config.max_len);
  const ag::Matrix encoded = encode_dialogue(tok, model.params, model.config);

  DialogueEmbedding embedding;
  embedding.id = dialogue.id;
  embedding.strategy = strategy;
  switch (strategy) {
    case PoolStrategy::Average:
      embedding.vector = average_pool(encoded);
      break;
    case PoolStrategy::Interlocutor:
      embedding.vector = interlocutor_pool(encoded, build_masks(tok));
      break;
    case PoolStrategy::P1Only:
      embedding.vector = interlocutor_mean(encoded, build_masks(tok).p1);
      break;
    case PoolStrategy::P2Only:
      embedding.vector = interlocutor_mean(encoded, build_masks(tok).p2);
      break;
  }
  return embedding;
}

std::vector<DialogueEmbedding> embed_corpus(const EmbeddingModel& model,
                                            const Corpus& corpus,
                                            PoolStrategy strategy) {
  std::vector<DialogueEmbedding> embeddings;
  embeddings.reserve(corpus.size());
  for (const Dialogue& dialogue : corpus.dialogues) {
    embeddings.push_back(embed_dialogue(model, dialogue, strategy));
  }
  return embeddings;
}

void export_embeddings(const std::vector<DialogueEmbedding>& embeddings,
                       const std::filesystem::path& path) {
  if (embeddings.empty()) {
    throw std::invalid_argument("export_embeddings: nothing to export");
  }
  const PoolStrategy strategy = embeddings.front().strategy;
  const Eigen::Index dim = embeddings.front().vector.size();
  for (const DialogueEmbedding& e : embeddings) {
    if (e.strategy != strategy) {
      throw std::invalid_argument(
          "export_embeddings: mixed strategies in one file");
    }
    if (e.vector.size() != dim) {
      throw std::invalid_argument("export_embeddings: inconsistent dimensions");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write embeddings: " + path.string());
  }
  out << "dialembed v1 " << embeddings.size() << " " << dim << " "
      << to_string(strategy) << "\n";
  char buffer[64];
  for (const DialogueEmbedding& e : embeddings) {
    out << e.id << '\t';
    for (Eigen::Index i = 0; i < dim; ++i) {
      // %.9g round-trips float32 exactly
      std::snprintf(buffer, sizeof(buffer), "%.9g",
                    static_cast<double>(static_cast<float>(e.vector(i))));
      if (i > 0) out << ' ';
      out << buffer;
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("embedding write failed: " + path.string());
  }
}

std::vector<DialogueEmbedding> import_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open embeddings: " + path.string());
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("empty embedding file: " + path.string());
  }
  std::istringstream header_stream(header);
  std::string tag, version, strategy_name;
  std::size_t count = 0;
  Eigen::Index dim = 0;
  header_stream >> tag >> version >> count >> dim >> strategy_name;
  if (!header_stream || tag != "dialembed" || version != "v1") {
    throw std::runtime_error("bad embedding header: " + header);
  }
  const PoolStrategy strategy = pool_strategy_from_string(strategy_name);

  std::vector<DialogueEmbedding> embeddings;
  embeddings.reserve(count);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": missing tab separator");
    }
    DialogueEmbedding embedding;
    embedding.id = line.substr(0, tab);
    embedding.strategy = strategy;
    embedding.vector.resize(dim);
    std::istringstream values(line.substr(tab + 1));
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (!(values >> embedding.vector(i))) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected " + std::to_string(dim) + " values");
      }
    }
    embeddings.push_back(std::move(embedding));
  }
  if (embeddings.size() != count) {
    throw std::runtime_error("embedding count mismatch in " + path.string());
  }
  return embeddings;
}

}  // namespace dial2vec
