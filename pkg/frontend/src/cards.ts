// Query cards: one card per pending instance, showing its features, score,
// and describing subspaces, with Anomaly / Nominal actions. Submitting a
// label goes straight to the service; the card locks itself before the
// request leaves so repeated clicks cannot double-submit.

import { Label, QueryPayload, SubspaceDescription } from "./api";

export type SubmitLabel = (instanceId: number, label: Label) => Promise<void>;

function el<K extends keyof HTMLElementTagNameMap>(
        tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

function featureTable(features: number[]): HTMLTableElement {
    const table = el("table", "feature-table");
    for (const [d, value] of features.entries()) {
        const row = table.insertRow();
        row.insertCell().textContent = `f${d}`;
        const cell = row.insertCell();
        cell.className = "feature-value";
        cell.textContent = String(value);
    }
    return table;
}

function boundsTable(subspaces: SubspaceDescription[]): HTMLTableElement {
    const table = el("table", "bounds-table");
    const head = table.insertRow();
    for (const title of ["leaf", "bounds", "cost", "relevance"]) {
        head.insertCell().textContent = title;
    }
    for (const sub of subspaces) {
        const row = table.insertRow();
        row.dataset.leafId = String(sub.leaf_id);
        row.insertCell().textContent = String(sub.leaf_id);
        const boundsCell = row.insertCell();
        boundsCell.className = "bounds";
        boundsCell.dataset.bounds = JSON.stringify(sub.bounds);
        boundsCell.textContent = sub.bounds
            .map(([lo, hi], d) => `f${d} ∈ [${lo.toFixed(3)}, ${hi.toFixed(3)}]`)
            .join("; ");
        row.insertCell().textContent = sub.cost.toExponential(3);
        row.insertCell().textContent = sub.relevance.toFixed(4);
    }
    return table;
}

function buildCard(query: QueryPayload, submit: SubmitLabel): HTMLElement {
    const card = el("div", "query-card");
    card.dataset.instanceId = String(query.instance_id);
    card.dataset.state = "pending";

    const header = el("div", "card-header");
    header.appendChild(el("span", "card-position", `#${query.position + 1}`));
    header.appendChild(el("span", "card-id", `instance ${query.instance_id}`));
    header.appendChild(el("span", "card-score",
        `score ${query.score.toFixed(4)}`));
    card.appendChild(header);

    card.appendChild(featureTable(query.features));
    card.appendChild(boundsTable(query.descriptions));

    const error = el("div", "card-error");
    error.hidden = true;

    const actions = el("div", "card-actions");
    const anomalyBtn = el("button", "btn-anomaly", "Anomaly");
    const nominalBtn = el("button", "btn-nominal", "Nominal");
    const buttons: Array<[HTMLButtonElement, Label]> =
        [[anomalyBtn, 1], [nominalBtn, -1]];

    const setEnabled = (enabled: boolean) => {
        anomalyBtn.disabled = !enabled;
        nominalBtn.disabled = !enabled;
    };

    for (const [button, label] of buttons) {
        button.addEventListener("click", async () => {
            if (card.dataset.state !== "pending") return;
            card.dataset.state = "submitting";
            setEnabled(false);
            error.hidden = true;
            try {
                await submit(query.instance_id, label);
                card.dataset.state = "labeled";
                card.classList.add("labeled",
                    label === 1 ? "labeled-anomaly" : "labeled-nominal");
            } catch (exc) {
                // a rejection only affects this card; others stay usable
                card.dataset.state = "pending";
                setEnabled(true);
                error.textContent = exc instanceof Error
                    ? exc.message : String(exc);
                error.hidden = false;
            }
        });
        actions.appendChild(button);
    }
    card.appendChild(actions);
    card.appendChild(error);
    return card;
}

export function renderQueryBatch(container: HTMLElement,
                                 queries: QueryPayload[],
                                 submit: SubmitLabel): void {
    container.replaceChildren();
    if (queries.length === 0) {
        container.appendChild(el("div", "no-queries",
            "No pending queries — the pool is exhausted."));
        return;
    }
    for (const query of queries) {
        container.appendChild(buildCard(query, submit));
    }
}
