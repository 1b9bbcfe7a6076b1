#include "kgbridge/prompt.hpp"

#include <algorithm>

namespace kgbridge {

std::string prompt_template_name(PromptTemplate t) {
  switch (t) {
    case PromptTemplate::molecule_qa: return "molecule-qa";
    case PromptTemplate::protein_qa: return "protein-qa";
    case PromptTemplate::molecule_generation: return "molecule-generation";
  }
  throw DataError("unknown prompt template");
}

PromptTemplate prompt_template_from_name(const std::string& s) {
  if (s == "molecule-qa") return PromptTemplate::molecule_qa;
  if (s == "protein-qa") return PromptTemplate::protein_qa;
  if (s == "molecule-generation") return PromptTemplate::molecule_generation;
  throw DataError("unknown prompt template: " + s);
}

namespace {

std::string join_indented(const std::vector<std::string>& names,
                          const char* indent, const char* what) {
  if (names.empty())
    throw DataError(std::string("prompt bundle has an empty ") + what + " list");
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) {
      out += '\n';
      out += indent;
    }
    out += names[i];
  }
  return out;
}

void require(const std::string& value, const char* what) {
  if (value.empty())
    throw DataError(std::string("prompt bundle is missing ") + what);
}

}  // namespace

std::string assemble_prompt(const PromptBundle& bundle) {
  switch (bundle.kind) {
    case PromptTemplate::molecule_qa: {
      require(bundle.smiles, "the molecule SMILES string");
      require(bundle.question, "the input question");
      return "Drug molecule structure: [START_I_SMILES] " + bundle.smiles +
             " [END_I_SMILES]\n\nTarget proteins:\n   " +
             join_indented(bundle.protein_names, "   ", "protein") +
             "\n\nAssociated diseases:\n   " +
             join_indented(bundle.disease_names, "   ", "disease") +
             "\n\nConsider the associated diseases and the proteins this molecule "
             "targets,  " +
             bundle.question + "\n";
    }
    case PromptTemplate::protein_qa: {
      require(bundle.sequence, "the protein sequence");
      require(bundle.question, "the input question");
      return "Protein sequence: [START_AMINO] " + bundle.sequence +
             " [END_AMINO]\n\nAssociated diseases:\n   " +
             join_indented(bundle.disease_names, "   ", "disease") +
             "\n\nRelated gene ontology terms:\n   " +
             join_indented(bundle.go_terms, "   ", "gene ontology term") +
             "\n\nConsider the associated diseases and the gene ontology terms "
             "related to this protein,  " +
             bundle.question + "\n";
    }
    case PromptTemplate::molecule_generation: {
      require(bundle.text_guidance, "the text guidance");
      return "The drug may be targeting the proteins:\n\n    " +
             join_indented(bundle.protein_names, "    ", "protein") + "\n\n" +
             bundle.text_guidance +
             "\n\nGenerate the most possible SMILES structure of this drug.\n";
    }
  }
  throw DataError("unknown prompt template");
}

PromptBundle retrieve_for_rag(const std::string& query_node_id,
                              const std::vector<RetrievalRole>& roles,
                              PromptTemplate kind, const BridgeModel& model,
                              const EmbeddingCache& cache, const KnowledgeGraph& kg,
                              const std::string& question_or_guidance) {
  const Node& query_node = kg.node(query_node_id);
  PromptBundle bundle;
  bundle.kind = kind;
  if (kind == PromptTemplate::molecule_qa) {
    bundle.smiles = query_node.feature;
    bundle.question = question_or_guidance;
  } else if (kind == PromptTemplate::protein_qa) {
    bundle.sequence = query_node.feature;
    bundle.question = question_or_guidance;
  } else {
    bundle.text_guidance = question_or_guidance;
  }

  const float* raw = cache.row(query_node.modality, query_node_id);
  RawEmbedding raw_emb{query_node_id, query_node.modality,
                       std::vector<float>(raw, raw + cache.raw_dim(query_node.modality))};
  const ProjectedEmbedding z = project(raw_emb, model);

  for (const RetrievalRole& role : roles) {
    if (role.k < 1) throw DataError("retrieval role k must be >= 1");
    std::vector<std::string> ids = kg.nodes_of_modality(role.tail_modality);
    if (ids.empty())
      throw DataError("no candidates of modality '" + role.tail_modality + "'");
    std::sort(ids.begin(), ids.end());
    const EmbeddingIndex index = build_index(ids, role.tail_modality, cache, &model);
    const BridgedEmbedding query = bridge_transform(z, query_node.modality,
                                                    role.tail_modality, role.relation,
                                                    model);
    const RankedResult ranked = top_k(index, query.vector, role.k);

    BundleSlot slot = role.slot;
    if (slot == BundleSlot::infer) {
      if (role.tail_modality == "protein")
        slot = BundleSlot::protein;
      else if (role.tail_modality == "disease")
        slot = BundleSlot::disease;
      else
        slot = BundleSlot::go_term;
    }
    std::vector<std::string>* list = slot == BundleSlot::protein ? &bundle.protein_names
                                     : slot == BundleSlot::disease
                                         ? &bundle.disease_names
                                         : &bundle.go_terms;
    for (const auto& e : ranked.entries) list->push_back(e.id);
  }
  return bundle;
}

}  // namespace kgbridge
