import init, { classify, corrupt, simulate } from "./pkg/xref_web.js";

const $ = (id) => document.getElementById(id);

function escape(s) {
  return String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function table(headers, rows) {
  const head = headers.map((h) => `<th>${escape(h)}</th>`).join("");
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><tr>${head}</tr>${body}</table>`;
}

function outcome(o) {
  return `<span class="${o}">${o}</span>`;
}

function call(fn, input, out) {
  try {
    return JSON.parse(fn(JSON.stringify(input)));
  } catch (e) {
    out.innerHTML = `<p class="error">${escape(e)}</p>`;
    return null;
  }
}

function runClassify() {
  const transcripts = {};
  for (const line of $("c-trans").value.split("\n")) {
    const at = line.indexOf(":");
    if (at > 0) transcripts[line.slice(0, at).trim()] = line.slice(at + 1).trim();
  }
  const out = $("c-out");
  const r = call(classify, { reference: $("c-ref").value, target: $("c-target").value.trim(), transcripts }, out);
  if (!r) return;
  out.innerHTML =
    `<p>Normalized reference: <code>${escape(r.reference)}</code>. Outcome for the target: ${outcome(r.outcome)}</p>` +
    table(
      ["ASR", "normalized transcript", "exact", "WER", "outcome as target"],
      r.rows.map((x) => [
        escape(x.asr),
        `<code>${escape(x.normalized)}</code>`,
        x.matches ? "yes" : "no",
        x.wer === null ? "–" : x.wer.toFixed(3),
        outcome(x.outcome_as_target),
      ]),
    );
}

function runCorrupt() {
  const out = $("n-out");
  const r = call(
    corrupt,
    {
      text: $("n-text").value,
      p_sub: Number($("n-sub").value),
      p_del: Number($("n-del").value),
      seed: Number($("n-seed").value),
      samples: Number($("n-samples").value),
      triggers: $("n-trig").value.split(/[\s,]+/).filter(Boolean),
    },
    out,
  );
  if (!r) return;
  const mean = r.mean_wer === null ? "–" : r.mean_wer.toFixed(3);
  out.innerHTML =
    `<p>Exact transcripts: ${(100 * r.exact_share).toFixed(1)}%, mean WER ${mean}</p>` +
    table(
      ["call", "transcript", "WER"],
      r.samples.map((s) => [s.text_index, `<code>${escape(s.transcript)}</code>`, s.wer === null ? "–" : s.wer.toFixed(3)]),
    );
}

function axes(ctx, w, h, pad, maxY, label) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, 10);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - 10, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.font = "12px system-ui";
  ctx.fillText(String(maxY), 4, 16);
  ctx.fillText("0", pad - 12, h - pad);
  ctx.fillText(label, pad + 4, 22);
}

function drawBars(iterations) {
  const c = $("s-bars");
  const ctx = c.getContext("2d");
  const pad = 30;
  const maxY = Math.max(1, ...iterations.map((r) => r.processed));
  axes(ctx, c.width, c.height, pad, maxY, "cases per iteration (red: failed)");
  const slot = (c.width - pad - 20) / Math.max(1, iterations.length);
  const scale = (c.height - pad - 20) / maxY;
  iterations.forEach((r, i) => {
    const x = pad + 4 + i * slot;
    const bw = Math.max(2, slot - 6);
    ctx.fillStyle = "#c9d6e8";
    ctx.fillRect(x, c.height - pad - r.processed * scale, bw, r.processed * scale);
    ctx.fillStyle = "#b00020";
    ctx.fillRect(x, c.height - pad - r.failed * scale, bw, r.failed * scale);
    ctx.fillStyle = "#333";
    ctx.fillText(String(r.iteration), x + bw / 2 - 4, c.height - pad + 14);
  });
}

function drawCurve(curve) {
  const c = $("s-curve");
  const ctx = c.getContext("2d");
  const pad = 30;
  const maxY = Math.max(1, ...curve.map((p) => p[1]));
  axes(ctx, c.width, c.height, pad, maxY, "total failed by visibility");
  if (curve.length === 0) return;
  const step = (c.width - pad - 40) / Math.max(1, curve.length - 1);
  const scale = (c.height - pad - 20) / maxY;
  ctx.strokeStyle = "#1f4e99";
  ctx.beginPath();
  curve.forEach(([v, f], i) => {
    const x = pad + 10 + i * step;
    const y = c.height - pad - f * scale;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#1f4e99";
  curve.forEach(([v, f], i) => {
    const x = pad + 10 + i * step;
    const y = c.height - pad - f * scale;
    ctx.fillRect(x - 3, y - 3, 6, 6);
    ctx.fillStyle = "#333";
    ctx.fillText(String(v), x - 6, c.height - pad + 14);
    ctx.fillText(String(f), x - 6, y - 6);
    ctx.fillStyle = "#1f4e99";
  });
}

function runSimulate() {
  const out = $("s-out");
  const grid = $("s-grid").value.split(/[\s,]+/).filter(Boolean).map(Number);
  const r = call(
    simulate,
    {
      seed: Number($("s-seed").value),
      corpus_size: Number($("s-size").value),
      num_asrs: Number($("s-asrs").value),
      iterations: Number($("s-iter").value),
      cases_per_iteration: Number($("s-cases").value),
      visibility: Number($("s-vis").value),
      estimator: $("s-est").checked,
      dynamic: $("s-dyn").checked,
      grid,
    },
    out,
  );
  if (!r) return;
  const perAsr = Object.entries(r.per_asr_failed).map(([k, v]) => `${escape(k)}=${v}`).join(", ");
  out.innerHTML =
    `<p><b>${r.total_failed}</b> failed cases for ${escape(r.target)} out of ${r.total_processed} processed. ` +
    `As-if-target counts: ${perAsr}</p>` +
    table(
      ["text", "target heard"],
      r.examples.map((e) => [`<code>${escape(e.text)}</code>`, `<code>${escape(e.target_heard)}</code>`]),
    );
  drawBars(r.iterations);
  drawCurve(r.curve);
}

init()
  .then(() => {
    $("status").textContent = "Ready.";
    $("c-run").onclick = runClassify;
    $("n-run").onclick = runCorrupt;
    $("s-run").onclick = runSimulate;
    runClassify();
    runCorrupt();
    runSimulate();
  })
  .catch((e) => {
    $("status").innerHTML = `<span class="error">Could not load the WebAssembly module: ${escape(e)}</span>`;
  });
