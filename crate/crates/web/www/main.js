import init, { renderFcgr, textStats, attribute } from "./pkg/fcgr_web.js";

const $ = (id) => document.getElementById(id);

function draw() {
  const text = $("text").value;
  const k = Number($("k").value);
  const strip = $("strip").checked;
  $("render-error").textContent = "";
  let pixels;
  try {
    pixels = renderFcgr(text, k, strip);
  } catch (e) {
    $("render-error").textContent = String(e.message ?? e);
    return;
  }
  const side = 1 << k;
  const canvas = $("image");
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  for (let i = 0; i < pixels.length; i++) {
    img.data[4 * i] = img.data[4 * i + 1] = img.data[4 * i + 2] = pixels[i];
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);

  const stats = JSON.parse(textStats(text, k, strip));
  $("summary").textContent =
    `${stats.characters} characters, ${stats.digits} digits, ${stats.kmers} ${k}-mers`;
  const body = $("pairs").querySelector("tbody");
  body.replaceChildren(...stats.pairs.map(([code, count]) => {
    const tr = document.createElement("tr");
    tr.innerHTML = `<td>${code}</td><td>${count}</td>`;
    return tr;
  }));
}

function decide() {
  try {
    const out = attribute(
      $("scores").value,
      Number($("min-prob").value),
      Number($("margin").value),
      $("noa").checked,
    );
    $("decision").textContent = JSON.stringify(JSON.parse(out), null, 2);
  } catch (e) {
    $("decision").textContent = String(e.message ?? e);
  }
}

await init();
$("render").addEventListener("click", draw);
$("decide").addEventListener("click", decide);
for (const id of ["noa", "min-prob", "margin"]) $(id).addEventListener("input", decide);
draw();
decide();
