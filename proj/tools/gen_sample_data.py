#!/usr/bin/env python3
"""Generate the bundled sample knowledge graph, annotations and literature fixtures.

Deterministic: the same script version always writes byte-identical files.
The PPI layer is shaped so that DIAMOnD from the six Alzheimer seed genes
adds the ten published module genes in their published order; the script
verifies this with an independent implementation before writing anything.
"""

import argparse
import hashlib
import json
import random
from pathlib import Path

from scipy.stats import hypergeom

SEEDS = [("ARC", 23237), ("CD2AP", 23607), ("BACE1", 23621), ("ABI3", 51225), ("MS4A4A", 51338), ("TREM2", 54209)]
MODULE = [("SH3BP1", 23616), ("ARHGAP44", 9912), ("ARHGAP17", 55114), ("SH3KBP1", 30011), ("DDN", 23109),
          ("NPHS2", 7827), ("NPHS1", 4868), ("SOS1", 6654), ("ABL1", 25), ("HCK", 3055)]
AD_GENES = [("APOE", 348), ("APP", 351), ("PSEN1", 5663), ("PSEN2", 5664), ("SORL1", 6653)]
KG_AD_GENES = [("NPBWR1", 2831), ("OR4C16", 219428), ("GOLGA6L10", 647042), ("PKD1L3", 342372), ("PCDHGA4", 56111),
               ("MIA", 8190), ("OR4C45", 403257), ("PMF1-BGLAP", 100527963), ("BLID", 414899),
               ("PCDHGA3", 56112), ("PCDHGB2", 56103), ("CCDC71L", 168455), ("RGS21", 431704), ("PSG11", 5680),
               ("OR5G3", 81193), ("OR4A47", 403253)]
OTHER_GENES = [("APBA1", 320), ("APBB1", 322), ("APBB3", 10307), ("ACHE", 43), ("BCHE", 590), ("GRIN1", 2902),
               ("SRC", 6714), ("RXRA", 6256), ("MAPT", 4137), ("SNCA", 6622), ("LRRK2", 120892), ("HTT", 3064),
               ("INS", 3630), ("PPARG", 5468), ("BRCA1", 672), ("ESR1", 2099), ("IL13", 3596), ("ADRB2", 154),
               ("DRD2", 1813), ("WNT3A", 89780), ("CTNNB1", 1499), ("GSK3B", 2932), ("CDK5", 1020)]
N_FILLER = 240

DISORDERS = [
    ("mondo.0004975", "Alzheimer disease", ["Alzheimer's disease", "AD"]),
    ("mondo.0005180", "Parkinson disease", ["Parkinson's disease", "PD"]),
    ("mondo.0007739", "Huntington disease", ["Huntington's chorea"]),
    ("mondo.0004979", "asthma", ["bronchial asthma"]),
    ("mondo.0005148", "type 2 diabetes mellitus", ["T2D"]),
    ("mondo.0007254", "breast cancer", ["breast carcinoma"]),
    ("mondo.0005090", "schizophrenia", []),
    ("mondo.0005377", "nephrotic syndrome", []),
    ("mondo.0011996", "chronic myeloid leukemia", ["CML"]),
]

DRUGS = [
    ("drugbank.DB00843", "Donepezil", ["ACHE"]),
    ("drugbank.DB00674", "Galantamine", ["ACHE"]),
    ("drugbank.DB00989", "Rivastigmine", ["ACHE", "BCHE"]),
    ("drugbank.DB01043", "Memantine", ["GRIN1"]),
    ("drugbank.DB01254", "Dasatinib", ["ABL1", "HCK", "SRC"]),
    ("drugbank.DB00619", "Imatinib", ["ABL1"]),
    ("drugbank.DB04868", "Nilotinib", ["ABL1"]),
    ("drugbank.DB06616", "Bosutinib", ["ABL1", "HCK", "SRC"]),
    ("drugbank.DB00307", "Bexarotene", ["RXRA"]),
    ("drugbank.DB12285", "Verubecestat", ["BACE1"]),
    ("drugbank.DB12463", "Semagacestat", ["PSEN1"]),
    ("drugbank.DB12274", "Aducanumab", ["APP"]),
    ("drugbank.DB14580", "Lecanemab", ["APP"]),
    ("drugbank.DB00412", "Rosiglitazone", ["PPARG"]),
    ("drugbank.DB01132", "Pioglitazone", ["PPARG"]),
    ("drugbank.DB00030", "Insulin human", ["INS"]),
    ("drugbank.DB01001", "Salbutamol", ["ADRB2"]),
    ("drugbank.DB00502", "Haloperidol", ["DRD2"]),
    ("drugbank.DB00675", "Tamoxifen", ["ESR1"]),
    ("drugbank.DB01097", "Leflunomide", []),
]

# KEGG-style pathways: (id, name, member symbols). The first four are the
# only terms hit by APOE, APP, PSEN1, PSEN2 and SORL1.
PATHWAYS = [
    ("hsa05010", "Alzheimer disease", ["APP", "PSEN1", "PSEN2", "BACE1", "MAPT", "GSK3B", "CDK5", "GRIN1"]),
    ("hsa04722", "Neuroactive ligand-receptor interaction", ["APOE", "NPBWR1", "DRD2", "ADRB2", "GRIN1"]),
    ("hsa04330", "Wnt signaling pathway", ["PSEN1", "WNT3A", "CTNNB1", "GSK3B"]),
    ("hsa05022", "Pathways of neurodegeneration - multiple diseases", ["SORL1", "HTT", "SNCA", "LRRK2", "MAPT"]),
    ("hsa05012", "Parkinson disease", ["SNCA", "LRRK2", "GSK3B"]),
    ("hsa05016", "Huntington disease", ["HTT", "CTNNB1"]),
    ("hsa05220", "Chronic myeloid leukemia", ["ABL1", "SOS1", "CTNNB1"]),
    ("hsa04520", "Adherens junction", ["SRC", "CTNNB1", "SH3KBP1"]),
    ("hsa04144", "Endocytosis", ["CD2AP", "SH3KBP1", "ARHGAP44", "ARC", "SH3BP1"]),
    ("hsa04380", "Osteoclast differentiation", ["TREM2", "SOS1", "HCK"]),
]

GO_TERMS = 40  # scattered synthetic GO-style terms over the background


def gene_id(entrez):
    return f"entrez.{entrez}"


def protein_id(symbol):
    return f"uniprot.{symbol.replace('-', '')}_HUMAN"


def build(rng):
    named = SEEDS + MODULE + AD_GENES + KG_AD_GENES + OTHER_GENES
    fillers = [(f"SGN{i:03d}", 9_000_000 + i) for i in range(1, N_FILLER + 1)]
    genes = named + fillers
    symbol_to_gene = {s: gene_id(e) for s, e in genes}

    nodes, edges = [], []
    for symbol, entrez in genes:
        synthetic = symbol.startswith("SGN")
        nodes.append({"id": gene_id(entrez), "type": "gene", "name": symbol,
                      "synonyms": [f"synthetic gene {symbol[3:]}"] if synthetic else [],
                      "attrs": {"entrez": str(entrez), "data_sources": "sample" if synthetic else "ncbi"}})
    for symbol, _ in genes:
        nodes.append({"id": protein_id(symbol), "type": "protein", "name": f"{symbol.replace('-', '')}_HUMAN",
                      "synonyms": [], "attrs": {"gene_symbol": symbol}})
        edges.append({"source": symbol_to_gene[symbol], "target": protein_id(symbol), "type": "encodes"})
    for did, name, syn in DISORDERS:
        nodes.append({"id": did, "type": "disorder", "name": name, "synonyms": syn, "attrs": {}})
    for drug, name, targets in DRUGS:
        nodes.append({"id": drug, "type": "drug", "name": name, "synonyms": [], "attrs": {}})
        for t in targets:
            edges.append({"source": drug, "target": protein_id(t), "type": "targets"})
    for pid, name, members in PATHWAYS:
        nodes.append({"id": f"kegg.{pid}", "type": "pathway", "name": name, "synonyms": [pid], "attrs": {}})
        for m in members:
            edges.append({"source": protein_id(m), "target": f"kegg.{pid}", "type": "in_pathway"})

    # Gene-disorder associations.
    ad = [s for s, _ in SEEDS + AD_GENES + KG_AD_GENES]
    for s in ad:
        edges.append({"source": symbol_to_gene[s], "target": "mondo.0004975", "type": "associated_with"})
    extra = {
        "mondo.0005180": ["SNCA", "LRRK2", "MAPT"],
        "mondo.0007739": ["HTT"],
        "mondo.0004979": ["IL13", "ADRB2"],
        "mondo.0005148": ["INS", "PPARG"],
        "mondo.0007254": ["BRCA1", "ESR1"],
        "mondo.0005090": ["DRD2", "GRIN1"],
        "mondo.0005377": ["NPHS1", "NPHS2", "CD2AP"],
        "mondo.0011996": ["ABL1"],
    }
    for did, syms in extra.items():
        for s in syms:
            edges.append({"source": symbol_to_gene[s], "target": did, "type": "associated_with"})
    filler_syms = [s for s, _ in fillers]
    for did, _, _ in DISORDERS[1:]:
        for s in rng.sample(filler_syms, 4):
            edges.append({"source": symbol_to_gene[s], "target": did, "type": "associated_with"})

    # PPI layer.
    seed_p = [protein_id(s) for s, _ in SEEDS]
    module_p = [protein_id(s) for s, _ in MODULE]
    background = [protein_id(s) for s, _ in genes if protein_id(s) not in set(seed_p + module_p)]
    rng.shuffle(background)
    ppi = set()

    def link(a, b):
        ppi.add(tuple(sorted((a, b))))

    cursor = 0
    touching = set()
    for i, t in enumerate(module_p, start=1):
        for s in seed_p:
            link(t, s)
        for _ in range(i):
            link(t, background[cursor])
            touching.add(background[cursor])
            cursor += 1
    for s in seed_p:
        for _ in range(2):
            link(s, background[cursor])
            touching.add(background[cursor])
            cursor += 1
    link(seed_p[1], seed_p[3])  # CD2AP - ABI3
    # Background-only interactions; nodes already touching the module get no
    # further module contact, so their link count to it never exceeds one.
    for _ in range(420):
        a, b = rng.sample(background, 2)
        link(a, b)
    for a, b in sorted(ppi):
        edges.append({"source": a, "target": b, "type": "ppi"})
    return nodes, edges, genes, symbol_to_gene


def diamond_oracle(nodes, edges, seeds, n_added):
    proteins = [n["id"] for n in nodes if n["type"] == "protein"]
    adj = {p: set() for p in proteins}
    for e in edges:
        if e["type"] == "ppi":
            adj[e["source"]].add(e["target"])
            adj[e["target"]].add(e["source"])
    n = len(proteins)
    module = list(seeds)
    added = []
    for _ in range(n_added):
        mset = set(module)
        best = None
        for c in proteins:
            if c in mset:
                continue
            k = len(adj[c] & mset)
            if k == 0:
                continue
            p = hypergeom.sf(k - 1, n, len(module), len(adj[c]))
            key = (p, -k, c)
            if best is None or key < best:
                best = key
        if best is None:
            break
        module.append(best[2])
        added.append(best[2])
    return added


def annotations(rng, genes, symbol_to_gene):
    terms = []
    for pid, name, members in PATHWAYS:
        terms.append({"term": pid, "name": name, "genes": sorted(symbol_to_gene[m] for m in members)})
    ad_five = {symbol_to_gene[s] for s, _ in AD_GENES}
    pool = sorted(symbol_to_gene[s] for s, _ in genes if symbol_to_gene[s] not in ad_five)
    for i in range(1, GO_TERMS + 1):
        size = rng.randint(3, 12)
        terms.append({"term": f"GO:{9000000 + i:07d}", "name": f"sample biological process {i}",
                      "genes": sorted(rng.sample(pool, size))})
    return terms


def paper(title, year, venue, authors, abstract):
    pid = hashlib.sha1(title.encode()).hexdigest()
    return {"paperId": pid, "title": title, "year": year, "venue": venue,
            "authors": [{"name": a} for a in authors], "abstract": abstract}


LITERATURE = {
    "Alzheimer's disease new drug development 2023": [
        paper("Phase 2 evaluation of Abx-123, a third-generation anti-amyloid antibody in early Alzheimer's disease",
              2023, "Alzheimer's & Dementia", ["L. Moreau", "K. Tanaka"],
              "A phase 2 investigation of a novel third-generation anti-amyloid antibody with safety and biomarker endpoints."),
        paper("Alzheimer's disease drug development pipeline: 2023", 2023, "Alzheimer's & Dementia: TRCI",
              ["J. Cummings", "G. Lee"], "An annual review of agents in clinical trials for Alzheimer's disease."),
        paper("Small-molecule BACE1 inhibitors: lessons from failed trials", 2023, "Nature Reviews Drug Discovery",
              ["R. Vassar"], "Why BACE1 inhibition failed in the clinic and what remains."),
        paper("Repurposing tyrosine kinase inhibitors for neurodegeneration", 2022, "Trends in Pharmacological Sciences",
              ["C. Moussa"], "Abl and Src family kinase inhibitors such as nilotinib and bosutinib in neurodegenerative disease."),
        paper("Microglial TREM2 as a therapeutic target in Alzheimer's disease", 2023, "Neuron",
              ["M. Colonna", "Y. Wang"], "TREM2 agonist antibodies and their rationale."),
    ],
    "new drugs for Alzheimer's disease clinical trials 2023": [
        paper("Alzheimer's disease drug development pipeline: 2023", 2023, "Alzheimer's & Dementia: TRCI",
              ["J. Cummings", "G. Lee"], "An annual review of agents in clinical trials for Alzheimer's disease."),
        paper("Lecanemab in early Alzheimer's disease", 2023, "New England Journal of Medicine",
              ["C. H. van Dyck"], "An 18-month phase 3 trial of lecanemab."),
        paper("Donanemab in early symptomatic Alzheimer disease", 2023, "JAMA", ["J. R. Sims"],
              "A phase 3 randomized clinical trial of donanemab."),
        paper("Counseling and disclosure practices in predictive Alzheimer's disease diagnostics: A scoping review",
              2024, "Alzheimer's & Dementia", ["S. Schwarz"], "A scoping review of disclosure practices."),
        paper("Safety of amyloid-related imaging abnormalities in anti-amyloid trials", 2023, "Lancet Neurology",
              ["P. Sperling"], "ARIA incidence across anti-amyloid programs."),
    ],
    "novel therapeutic targets for Alzheimer's disease review": [
        paper("Phase 2 evaluation of Abx-123, a third-generation anti-amyloid antibody in early Alzheimer's disease",
              2023, "Alzheimer's & Dementia", ["L. Moreau", "K. Tanaka"],
              "A phase 2 investigation of a novel third-generation anti-amyloid antibody with safety and biomarker endpoints."),
        paper("Microglial TREM2 as a therapeutic target in Alzheimer's disease", 2023, "Neuron",
              ["M. Colonna", "Y. Wang"], "TREM2 agonist antibodies and their rationale."),
        paper("Network medicine approaches to Alzheimer's disease drug repurposing", 2021, "Nature Aging",
              ["F. Cheng"], "Interactome-based proximity and module approaches for repurposing."),
        paper("Doença de Alzheimer: diagnóstico precoce e acesso ao tratamento - revisão de literatura", 2025,
              "Revista ft", ["A. Souza"], "Revisão sobre diagnóstico precoce."),
        paper("Tau-directed therapies: current status", 2022, "Nature Reviews Neurology", ["E. Congdon"],
              "An overview of tau aggregation inhibitors and antibodies."),
    ],
    "anti-amyloid antibodies Alzheimer's disease phase 3 results": [
        paper("Lecanemab in early Alzheimer's disease", 2023, "New England Journal of Medicine",
              ["C. H. van Dyck"], "An 18-month phase 3 trial of lecanemab."),
        paper("Donanemab in early symptomatic Alzheimer disease", 2023, "JAMA", ["J. R. Sims"],
              "A phase 3 randomized clinical trial of donanemab."),
    ],
    "repurposed drugs for Alzheimer's disease": [
        paper("Network medicine approaches to Alzheimer's disease drug repurposing", 2021, "Nature Aging",
              ["F. Cheng"], "Interactome-based proximity and module approaches for repurposing."),
        paper("Repurposing tyrosine kinase inhibitors for neurodegeneration", 2022, "Trends in Pharmacological Sciences",
              ["C. Moussa"], "Abl and Src family kinase inhibitors such as nilotinib and bosutinib in neurodegenerative disease."),
    ],
    "tau targeting therapies in clinical development": [
        paper("Tau-directed therapies: current status", 2022, "Nature Reviews Neurology", ["E. Congdon"],
              "An overview of tau aggregation inhibitors and antibodies."),
    ],
    "dasatinib Alzheimer's disease": [
        paper("Senolytic therapy with dasatinib and quercetin in Alzheimer's disease: a pilot study", 2023,
              "Nature Medicine", ["M. Gonzales"], "A pilot open-label trial of dasatinib plus quercetin."),
        paper("Repurposing tyrosine kinase inhibitors for neurodegeneration", 2022, "Trends in Pharmacological Sciences",
              ["C. Moussa"], "Abl and Src family kinase inhibitors such as nilotinib and bosutinib in neurodegenerative disease."),
    ],
    "ABL1 inhibitors in neurodegeneration": [
        paper("Nilotinib effects in Alzheimer's disease: a randomized phase 2 trial", 2021, "Annals of Neurology",
              ["R. Turner"], "Safety and biomarker effects of nilotinib."),
        paper("Bosutinib in dementia with Lewy bodies", 2022, "Movement Disorders", ["F. Pagan"],
              "A pilot trial of bosutinib."),
    ],
    "HCK microglia Alzheimer's disease": [
        paper("Hematopoietic cell kinase in microglial amyloid clearance", 2020, "Journal of Neuroinflammation",
              ["S. Lee"], "HCK deficiency impairs microglial responses to amyloid."),
    ],
}

FAILED_QUERIES = {"literature timeout probe": "timeout"}


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    rng = random.Random(20240917)

    nodes, edges, genes, symbol_to_gene = build(rng)
    seeds = [protein_id(s) for s, _ in SEEDS]
    added = diamond_oracle(nodes, edges, seeds, 10)
    expected = [protein_id(s) for s, _ in MODULE]
    if added != expected:
        raise SystemExit(f"DIAMOnD order mismatch:\n got {added}\nwant {expected}")

    kg = out / "kg" / "sample"
    kg.mkdir(parents=True, exist_ok=True)
    write_jsonl(kg / "nodes.jsonl", nodes)
    write_jsonl(kg / "edges.jsonl", edges)
    schema = {
        "node_types": ["gene", "protein", "drug", "disorder", "pathway"],
        "edge_types": [
            {"name": "encodes", "source": "gene", "target": "protein"},
            {"name": "ppi", "source": "protein", "target": "protein"},
            {"name": "associated_with", "source": "gene", "target": "disorder"},
            {"name": "targets", "source": "drug", "target": "protein"},
            {"name": "in_pathway", "source": "protein", "target": "pathway"},
        ],
    }
    (kg / "schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    write_jsonl(kg / "annotations.jsonl", annotations(rng, genes, symbol_to_gene))

    lit = out / "literature"
    lit.mkdir(parents=True, exist_ok=True)
    index = {"queries": {}}
    for i, (query, papers) in enumerate(LITERATURE.items(), start=1):
        name = f"q{i:02d}.json"
        (lit / name).write_text(json.dumps({"total": len(papers), "data": papers}, indent=2, ensure_ascii=False) + "\n",
                                encoding="utf-8")
        index["queries"][query] = name
    for query, err in FAILED_QUERIES.items():
        index["queries"][query] = {"error": err}
    (lit / "index.json").write_text(json.dumps(index, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(nodes)} nodes, {len(edges)} edges; DIAMOnD order verified")


if __name__ == "__main__":
    main()
