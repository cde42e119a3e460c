// Built with: wasm-pack build crates/demo --target web --out-dir www/pkg
import init, { bm25_explore, rerank_curve, metrics_at_k } from "./pkg/toolde_demo.js";

const $ = (id) => document.getElementById(id);

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const body = rows.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
  return `<table><tr>${th}</tr>${body}</table>`;
}

function guard(out, fn) {
  try {
    fn();
  } catch (e) {
    $(out).innerHTML = `<p class="err">${e}</p>`;
  }
}

function bm25() {
  const k1 = parseFloat($("bm25-k1").value);
  const b = parseFloat($("bm25-b").value);
  $("bm25-k1-v").textContent = k1.toFixed(2);
  $("bm25-b-v").textContent = b.toFixed(2);
  guard("bm25-out", () => {
    const r = JSON.parse(bm25_explore($("bm25-corpus").value, $("bm25-query").value, k1, b));
    $("bm25-out").innerHTML =
      `<p>terms: ${r.terms.join(" ")} &middot; avg length ${r.avg_doc_length.toFixed(2)}</p>` +
      table(["doc", "length", "score"], r.rows.map((x) => [x.id, x.length, x.score.toFixed(4)]));
  });
}

function curve() {
  guard("curve-out", () => {
    const from = parseFloat($("curve-from").value);
    const to = parseFloat($("curve-to").value);
    const r = JSON.parse(rerank_curve(parseFloat($("curve-false").value), from, to, 200));
    const c = $("curve-canvas");
    const g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    g.strokeStyle = "#ccc";
    g.beginPath();
    g.moveTo(0, c.height / 2);
    g.lineTo(c.width, c.height / 2);
    g.stroke();
    g.strokeStyle = "#0366d6";
    g.beginPath();
    r.points.forEach(([t, p], i) => {
      const x = ((t - from) / (to - from)) * c.width;
      const y = (1 - p) * c.height;
      i ? g.lineTo(x, y) : g.moveTo(x, y);
    });
    g.stroke();
    const mid = r.points.find(([, p]) => p >= 0.5);
    $("curve-out").textContent = mid ? `p crosses 0.5 at logit_true = ${mid[0].toFixed(2)}` : "";
  });
}

function metrics() {
  guard("m-out", () => {
    const ks = new Uint32Array($("m-ks").value.split(/[\s,]+/).filter(Boolean).map(Number));
    const r = JSON.parse(metrics_at_k($("m-ranked").value, $("m-gold").value, ks));
    $("m-out").innerHTML = table(
      ["K", "NDCG", "Recall", "Completeness"],
      r.rows.map((x) => [x.k, x.ndcg.toFixed(4), x.recall.toFixed(4), x.completeness.toFixed(0)]),
    );
  });
}

await init();
for (const id of ["bm25-corpus", "bm25-query", "bm25-k1", "bm25-b"]) $(id).addEventListener("input", bm25);
for (const id of ["curve-false", "curve-from", "curve-to"]) $(id).addEventListener("input", curve);
for (const id of ["m-ranked", "m-gold", "m-ks"]) $(id).addEventListener("input", metrics);
bm25();
curve();
metrics();
