// Session dashboard: discovery curve, queries-spent counter, drift ticker,
// and a 2D scatter of a chosen feature pair with the selected subspace
// rectangles overlaid. Everything rendered here is taken verbatim from the
// service metrics/descriptions payloads.

import { MetricsPayload, QueryPayload, SubspaceDescription } from "./api";

const SVG_NS = "http://www.w3.org/2000/svg";
const CURVE_W = 480;
const CURVE_H = 240;
const SCATTER_W = 360;
const SCATTER_H = 360;
const PAD = 24;

export interface ScatterPoint {
    instanceId: number;
    features: number[];
    highlighted: boolean;
}

function svgEl(tag: string, attrs: Record<string, string | number>): SVGElement {
    const node = document.createElementNS(SVG_NS, tag);
    for (const [key, value] of Object.entries(attrs)) {
        node.setAttribute(key, String(value));
    }
    return node;
}

export function renderCounter(container: HTMLElement,
                              metrics: MetricsPayload): void {
    container.replaceChildren();
    const spent = document.createElement("span");
    spent.className = "queries-spent";
    spent.textContent = `${metrics.queries_spent} queries spent`;
    const found = document.createElement("span");
    found.className = "anomalies-found";
    found.textContent = `${metrics.cum_anomalies} anomalies confirmed`;
    container.append(spent, " · ", found);
}

export function renderCurve(container: HTMLElement,
                            metrics: MetricsPayload): void {
    container.replaceChildren();
    const svg = svgEl("svg", {
        class: "discovery-curve", width: CURVE_W, height: CURVE_H,
        viewBox: `0 0 ${CURVE_W} ${CURVE_H}`,
    });
    const curve = metrics.curve;
    const xMax = Math.max(curve.length, 1);
    const yMax = Math.max(metrics.cum_anomalies, 1);
    const toX = (q: number) => PAD + (q / xMax) * (CURVE_W - 2 * PAD);
    const toY = (a: number) => CURVE_H - PAD - (a / yMax) * (CURVE_H - 2 * PAD);

    svg.appendChild(svgEl("line", {
        class: "axis", x1: PAD, y1: CURVE_H - PAD,
        x2: CURVE_W - PAD, y2: CURVE_H - PAD,
    }));
    svg.appendChild(svgEl("line", {
        class: "axis", x1: PAD, y1: PAD, x2: PAD, y2: CURVE_H - PAD,
    }));

    const points = curve.map((a, i) => `${toX(i + 1)},${toY(a)}`);
    if (points.length > 0) {
        svg.appendChild(svgEl("polyline", {
            class: "curve-line", fill: "none",
            points: [`${toX(0)},${toY(0)}`, ...points].join(" "),
        }));
    }
    for (const [i, anomalies] of curve.entries()) {
        const dot = svgEl("circle", {
            class: "curve-point", r: 3,
            cx: toX(i + 1), cy: toY(anomalies),
        });
        dot.setAttribute("data-queries", String(i + 1));
        dot.setAttribute("data-anomalies", String(anomalies));
        svg.appendChild(dot);
    }
    container.appendChild(svg);
}

export function renderDriftTicker(container: HTMLElement,
                                  metrics: MetricsPayload): void {
    container.replaceChildren();
    const list = document.createElement("ul");
    list.className = "drift-ticker";
    if (metrics.drift_report.length === 0) {
        const item = document.createElement("li");
        item.className = "drift-none";
        item.textContent = "no drift events";
        list.appendChild(item);
    }
    for (const event of metrics.drift_report) {
        const item = document.createElement("li");
        item.className = "drift-event";
        item.textContent = JSON.stringify(event);
        list.appendChild(item);
    }
    container.appendChild(list);
}

export function renderScatter(container: HTMLElement,
                              points: ScatterPoint[],
                              rectangles: SubspaceDescription[],
                              fx: number, fy: number): void {
    container.replaceChildren();
    const xs = points.map(p => p.features[fx]);
    const ys = points.map(p => p.features[fy]);
    for (const rect of rectangles) {
        xs.push(rect.bounds[fx][0], rect.bounds[fx][1]);
        ys.push(rect.bounds[fy][0], rect.bounds[fy][1]);
    }
    const [xLo, xHi] = [Math.min(...xs, 0), Math.max(...xs, 1)];
    const [yLo, yHi] = [Math.min(...ys, 0), Math.max(...ys, 1)];
    const toX = (v: number) =>
        PAD + ((v - xLo) / (xHi - xLo)) * (SCATTER_W - 2 * PAD);
    const toY = (v: number) =>
        SCATTER_H - PAD - ((v - yLo) / (yHi - yLo)) * (SCATTER_H - 2 * PAD);

    const svg = svgEl("svg", {
        class: "feature-scatter", width: SCATTER_W, height: SCATTER_H,
        viewBox: `0 0 ${SCATTER_W} ${SCATTER_H}`,
    });
    // rectangles behind the points: the selected subspaces projected to
    // (fx, fy); remaining dimensions are shown in the card bounds tables
    for (const rect of rectangles) {
        const [rxLo, rxHi] = rect.bounds[fx];
        const [ryLo, ryHi] = rect.bounds[fy];
        const node = svgEl("rect", {
            class: "subspace-rect",
            x: toX(rxLo), y: toY(ryHi),
            width: toX(rxHi) - toX(rxLo),
            height: toY(ryLo) - toY(ryHi),
        });
        node.setAttribute("data-leaf-id", String(rect.leaf_id));
        svg.appendChild(node);
    }
    for (const point of points) {
        const dot = svgEl("circle", {
            class: point.highlighted ? "point point-query" : "point",
            r: point.highlighted ? 4 : 2,
            cx: toX(point.features[fx]), cy: toY(point.features[fy]),
        });
        dot.setAttribute("data-instance-id", String(point.instanceId));
        svg.appendChild(dot);
    }
    container.appendChild(svg);
}

export function renderStalePrompt(container: HTMLElement): void {
    container.replaceChildren();
    const prompt = document.createElement("div");
    prompt.className = "stale-session";
    prompt.textContent =
        "Session unreachable — reload the page to resume from the event log.";
    container.appendChild(prompt);
}

export interface DashboardSections {
    counter: HTMLElement;
    curve: HTMLElement;
    drift: HTMLElement;
    scatter: HTMLElement;
}

export function renderDashboard(sections: DashboardSections,
                                metrics: MetricsPayload,
                                queries: QueryPayload[],
                                fx = 0, fy = 1): void {
    renderCounter(sections.counter, metrics);
    renderCurve(sections.curve, metrics);
    renderDriftTicker(sections.drift, metrics);
    const points: ScatterPoint[] = queries.map(q => ({
        instanceId: q.instance_id,
        features: q.features,
        highlighted: true,
    }));
    const rects = queries.flatMap(q => q.descriptions);
    renderScatter(sections.scatter, points, rects, fx, fy);
}
