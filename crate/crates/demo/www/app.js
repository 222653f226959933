import init, { DemoSession, exploreConflict, sweepAlpha } from "./pkg/factsteer_demo.js";

const $ = (id) => document.getElementById(id);
const fmt = (x, digits = 3) => (x === null || x === undefined ? "-" : Number(x).toFixed(digits));

function escape(text) {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function showError(target, err) {
  target.innerHTML = `<p class="error">${escape(String(err.message ?? err))}</p>`;
}

function option(select, value, label = value) {
  const o = document.createElement("option");
  o.value = value;
  o.textContent = label;
  select.append(o);
}

function candidateTable(candidates, chosen) {
  const rows = candidates
    .map((c) => {
      const cls = c.token === chosen ? "chosen" : "";
      return `<tr class="${cls}"><td>${escape(c.token)}</td><td>${fmt(c.l_new)}</td><td>${fmt(c.l_prior)}</td><td>${fmt(c.adjusted)}</td></tr>`;
    })
    .join("");
  return `<table><tr><th>token</th><th>log p with fact</th><th>log p prior</th><th>adjusted</th></tr>${rows}</table>`;
}

let session;
let catalog;

function renderFacts() {
  const facts = JSON.parse(session.facts());
  $("facts").innerHTML = facts.length
    ? facts.map((f) => `<li>${escape(f.surface_text)} <small>(was ${escape(f.old_object ?? "?")})</small></li>`).join("")
    : "<li><em>memory is empty</em></li>";
}

function fillObjects() {
  const rel = catalog.relations.find((r) => r.name === $("edit-relation").value);
  $("edit-object").replaceChildren();
  rel.objects.forEach((o) => option($("edit-object"), o));
}

function setupEditAsk() {
  catalog.subjects.forEach((s) => option($("edit-subject"), s));
  catalog.relations.forEach((r) => option($("edit-relation"), r.name, r.template.replace("{s}", "...")));
  catalog.example_queries.forEach((q) => option($("examples"), q));
  fillObjects();
  renderFacts();

  $("edit-relation").addEventListener("change", fillObjects);
  $("edit-form").addEventListener("submit", (e) => {
    e.preventDefault();
    try {
      session.edit($("edit-subject").value, $("edit-relation").value, $("edit-object").value);
      renderFacts();
    } catch (err) {
      showError($("answer"), err);
    }
  });
  $("reset").addEventListener("click", () => {
    session.reset();
    renderFacts();
    $("answer").replaceChildren();
  });
  $("ask-form").addEventListener("submit", (e) => {
    e.preventDefault();
    const query = $("query").value.trim() || $("query").placeholder;
    try {
      const v = JSON.parse(session.ask(query, Number($("ask-alpha").value), Number($("ask-k").value)));
      renderAnswer(v);
    } catch (err) {
      showError($("answer"), err);
    }
  });
}

function renderAnswer(v) {
  let html = `<p class="answer">${escape(v.query)} <strong>${escape(v.answer)}</strong></p>`;
  html += `<p>Unedited model: ${escape(v.unedited)}${v.fallback_used ? " (no fact selected, so the unedited answer is used)" : ""}</p>`;
  if (v.retrieved.length) {
    const rows = v.retrieved
      .map((r) => `<tr class="${r.selected ? "chosen" : "dropped"}"><td>${escape(r.text)}</td><td>${fmt(r.score)}</td><td>${fmt(r.probability)}</td><td>${r.selected ? "kept" : "dropped"}</td></tr>`)
      .join("");
    html += `<h3>Retrieved</h3><table><tr><th>fact</th><th>similarity</th><th>relevance</th><th></th></tr>${rows}</table>`;
  }
  if (v.context) {
    html += `<h3>Context</h3><pre>${escape(v.context)}</pre>`;
    html += `<h3>First token</h3>${candidateTable(v.candidates, v.answer.split(" ")[0])}`;
  }
  $("answer").innerHTML = html;
}

function setupConflict() {
  const ids = ["p-old", "p-new", "beta", "alpha", "mode"];
  const update = () => {
    for (const id of ["p-old", "p-new", "beta", "alpha"]) {
      $(`${id}-out`).textContent = $(id).value;
    }
    try {
      const v = JSON.parse(
        exploreConflict(Number($("p-old").value), Number($("p-new").value), Number($("beta").value), Number($("alpha").value), $("mode").value),
      );
      $("conflict-result").innerHTML =
        `<p>Stored fact: <em>${escape(v.fact)}</em></p>` +
        `<p class="answer">${escape(v.prompt)} <strong>${escape(v.chosen)}</strong></p>` +
        `<p>Without the fact: ${escape(v.unedited)}. With the fact but no contrast: ${escape(v.chosen_without_contrast)}.</p>` +
        candidateTable(v.candidates, v.chosen);
    } catch (err) {
      showError($("conflict-result"), err);
    }
  };
  ids.forEach((id) => $(id).addEventListener("input", update));
  update();
}

function setupSweep() {
  $("sweep-form").addEventListener("submit", (e) => {
    e.preventDefault();
    $("sweep-result").innerHTML = "<p>Running...</p>";
    // Let the status paint before the synchronous sweep starts.
    setTimeout(() => {
      try {
        const rows = JSON.parse(sweepAlpha(Number($("sweep-cases").value), Number($("sweep-seed").value)));
        const best = Math.max(...rows.map((r) => r.average ?? 0));
        const body = rows
          .map((r) => {
            const cls = r.average === best ? "chosen" : "";
            const bar = `<span class="bar" style="width:${(r.average ?? 0) * 10}rem"></span>`;
            return `<tr class="${cls}"><td>${r.value}</td><td>${fmt(r.reliability)}</td><td>${fmt(r.generality)}</td><td>${fmt(r.locality)}</td><td>${fmt(r.average)}</td><td>${bar}</td></tr>`;
          })
          .join("");
        $("sweep-result").innerHTML =
          `<table><tr><th>alpha</th><th>reliability</th><th>generality</th><th>locality</th><th>average</th><th></th></tr>${body}</table>`;
      } catch (err) {
        showError($("sweep-result"), err);
      }
    }, 20);
  });
}

async function main() {
  try {
    await init();
  } catch (err) {
    $("status").innerHTML = `<span class="error">Could not load the WebAssembly module: ${escape(String(err))}</span>`;
    return;
  }
  session = new DemoSession();
  catalog = JSON.parse(session.catalog());
  $("status").textContent = "Ready.";
  setupEditAsk();
  setupConflict();
  setupSweep();
}

main();
